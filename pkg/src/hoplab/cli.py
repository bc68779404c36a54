"""Command-line entry point: ``hoplab simulate|label|reconstruct|evaluate|trace-eval``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import threading
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

from . import __version__
from .engine import MODES, EngineConfig, ProgressSeries, reconstruct, reconstruct_reversed
from .geometry import CameraIntrinsics, SceneSpec, Trace, evaluate_trace, trace_rmse
from .io import atomic_write_text, dumps_csv, dumps_jsonl, read_csv, write_manifest
from .labeler import LabelerConfig, label_sequence
from .metrics import mean_report, voc_report
from .predictors import BridgeError, PredictorError, PredictorSpec, ProgressTable
from .schemas import (
    PROGRESS_COLUMNS,
    SCENE_SCHEMA,
    TRACE_REPORT_COLUMNS,
    TRACE_SCHEMA,
    VOC_COLUMNS,
    SchemaError,
    validate_record,
)
from .simulate import simulate
from .trajectory import SampledSequence, dumps_trajectories, read_trajectories, sample_sequence

log = logging.getLogger("hoplab")

EXIT_OK = 0
EXIT_OPERATION = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_SCHEMA = 4
EXIT_BRIDGE = 5

T = TypeVar("T")
R = TypeVar("R")


def _pair(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(",")
    return int(lo), int(hi or lo)


def _seed(args: argparse.Namespace) -> int:
    env = os.environ.get("HOPLAB_SEED")
    return int(env) if env else args.seed


def _ordered_map(fn: Callable[[T], R], items: Sequence[T], jobs: int) -> list[R]:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _sequences(path: str, chunk: int) -> list[SampledSequence]:
    return [sample_sequence(t, chunk) for t in read_trajectories(path)]


# -- subcommands ---------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> None:
    seed = _seed(args)
    trajs = simulate(args.n, _pair(args.length), _pair(args.segments), seed)
    atomic_write_text(args.out, dumps_trajectories(trajs))
    write_manifest(args.out, "simulate", seed, {"n": args.n, "length": args.length, "segments": args.segments})


def cmd_label(args: argparse.Namespace) -> None:
    seed = _seed(args)
    cfg = LabelerConfig(args.n_hop, args.n_dis, args.zero_frac, args.zero_eps, seed)
    seqs = _sequences(args.inp, args.chunk)
    results = _ordered_map(lambda s: label_sequence(s, cfg), seqs, args.jobs)
    rows = [smp.to_json() for res in results for smp in res.samples]
    atomic_write_text(args.out, dumps_jsonl(rows))
    infeasible = sum(len(r.infeasible) for r in results)
    log.info("labeled %d trajectories: %d samples, %d infeasible bins", len(seqs), len(rows), infeasible)
    write_manifest(
        args.out,
        "label",
        seed,
        {
            "chunk": args.chunk,
            "n_hop": args.n_hop,
            "n_dis": args.n_dis,
            "zero_frac": args.zero_frac,
            "zero_eps": args.zero_eps,
            "infeasible_bins": infeasible,
        },
    )


class _PredictorLanes:
    """One predictor per worker thread when the predictor is not concurrency-safe."""

    def __init__(self, spec: PredictorSpec, table: ProgressTable, timeout: float):
        self.spec, self.table, self.timeout = spec, table, timeout
        self._local = threading.local()
        self._all: list = []
        self._lock = threading.Lock()
        self._shared = None

    def get(self):
        if self._shared is not None:
            return self._shared
        pred = getattr(self._local, "pred", None)
        if pred is None:
            pred = self.spec.build(self.table, self.timeout)
            with self._lock:
                self._all.append(pred)
            if pred.concurrent_safe:
                self._shared = pred
            self._local.pred = pred
        return pred

    def close(self) -> None:
        for p in self._all:
            close = getattr(p, "close", None)
            if close:
                close()


def _series_rows(series: ProgressSeries) -> Iterable[list]:
    for p in series.points:
        yield [
            series.trajectory_id,
            series.direction,
            p.state_index,
            p.hop_inc,
            p.hop_fwd,
            p.hop_bwd,
            p.phi_inc,
            p.phi_fwd,
            p.phi_bwd,
            p.phi_fused,
            p.phi_conservative,
            p.discrepancy,
            p.weight,
            p.value(series.mode),
        ]


def cmd_reconstruct(args: argparse.Namespace) -> None:
    seed = _seed(args)
    spec = PredictorSpec.parse(args.predictor, seed=seed)
    cfg = EngineConfig(args.mode, args.sensitivity, args.epsilon, not args.no_clamp)
    seqs = _sequences(args.inp, args.chunk)
    lanes = _PredictorLanes(spec, ProgressTable.from_sequences(seqs), args.timeout)
    try:
        def run(seq: SampledSequence) -> list[list]:
            pred = lanes.get()
            rows = list(_series_rows(reconstruct(pred, seq, cfg)))
            if not args.no_reverse:
                rows.extend(_series_rows(reconstruct_reversed(pred, seq, cfg)))
            return rows

        chunks = _ordered_map(run, seqs, args.jobs)
    finally:
        lanes.close()
    atomic_write_text(args.out, dumps_csv(PROGRESS_COLUMNS, [r for c in chunks for r in c]))
    write_manifest(
        args.out,
        "reconstruct",
        seed,
        {
            "chunk": args.chunk,
            "predictor": args.predictor,
            "mode": cfg.mode,
            "sensitivity": cfg.consistency_sensitivity,
            "epsilon": cfg.stability_epsilon,
            "clamp": cfg.clamp_outputs,
        },
    )


def cmd_evaluate(args: argparse.Namespace) -> None:
    seqs = {s.trajectory_id: s for s in _sequences(args.gt, args.chunk)}
    series: dict[tuple[str, str], list[tuple[int, float]]] = defaultdict(list)
    for i, row in enumerate(read_csv(args.progress), 2):
        missing = [c for c in ("trajectory_id", "direction", "t", "phi") if c not in row]
        if missing:
            raise SchemaError(f"{args.progress}: missing columns {missing}")
        try:
            series[(row["trajectory_id"], row["direction"])].append((int(row["t"]), float(row["phi"])))
        except ValueError as exc:
            raise SchemaError(f"{args.progress}:{i}: {exc}") from None
    reports = []
    for tid in dict.fromkeys(k[0] for k in series):
        if tid not in seqs:
            raise SchemaError(f"trajectory {tid!r} is not in {args.gt}")
        seq = seqs[tid]
        fwd = [v for _, v in sorted(series[(tid, "forward")])]
        rev = [v for _, v in sorted(series.get((tid, "reverse"), []))]
        if len(fwd) != seq.M + 1 or (rev and len(rev) != seq.M + 1):
            raise SchemaError(f"trajectory {tid!r}: progress length does not match {seq.M + 1} states")
        if not rev:
            raise SchemaError(f"trajectory {tid!r}: no reverse-direction rows")
        reports.append(voc_report(tid, fwd, rev, seq.progress_values()))
    if not reports:
        raise SchemaError(f"{args.progress}: no progress rows")
    rows = [
        [r.trajectory_id, r.n_states, r.voc_forward, r.voc_reverse, r.tie_fraction, r.degenerate, r.mae, r.terminal_drift]
        for r in [*reports, mean_report(reports)]
    ]
    atomic_write_text(args.out, dumps_csv(VOC_COLUMNS, rows))
    write_manifest(args.out, "evaluate", None, {"chunk": args.chunk})


def _read_traces(path: str) -> list[tuple[str, Trace]]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            validate_record(obj, TRACE_SCHEMA, where=f"{path}:{lineno}")
            out.append((obj["id"], Trace.from_uvd(obj["points"])))
    return out


def cmd_trace_eval(args: argparse.Namespace) -> None:
    with open(args.scene, encoding="utf-8") as f:
        scene_obj = json.load(f)
    validate_record(scene_obj, SCENE_SCHEMA, where=args.scene)
    scene = SceneSpec.from_json(scene_obj)
    K = CameraIntrinsics.parse(args.intrinsics)
    gt = dict(_read_traces(args.gt)) if args.gt else {}
    rows = []
    for tid, trace in _read_traces(args.traces):
        ev = evaluate_trace(trace, scene, K, exact=args.exact)
        rmse = trace_rmse(trace, gt[tid], K) if tid in gt else float("nan")
        rows.append([tid, ev.start_ok, ev.end_ok, ev.collision_free, ev.success, rmse])
    atomic_write_text(args.out, dumps_csv(TRACE_REPORT_COLUMNS, rows))
    write_manifest(args.out, "trace-eval", None, {"intrinsics": args.intrinsics, "exact": args.exact})


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hoplab", description="Hop-based dense progress estimation toolkit")
    ap.add_argument("--version", action="version", version=f"hoplab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write synthetic trajectories")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--length", default="50,500", help="frame count range LO,HI")
    p.add_argument("--segments", default="2,8", help="keyframe segment range LO,HI")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("label", parents=[common], help="emit balanced hop samples")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--chunk", type=int, default=10)
    p.add_argument("--n-hop", type=int, default=8)
    p.add_argument("--n-dis", type=int, default=4)
    p.add_argument("--zero-frac", type=float, default=0.2)
    p.add_argument("--zero-eps", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("reconstruct", parents=[common], help="reconstruct progress from predicted hops")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--predictor", default="oracle")
    p.add_argument("--mode", choices=MODES, default="fused_mean")
    p.add_argument("--chunk", type=int, default=10)
    p.add_argument("--sensitivity", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--no-clamp", action="store_true")
    p.add_argument("--no-reverse", action="store_true", help="skip the time-reversed run")
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", parents=[common], help="VOC+/VOC- and error statistics")
    p.add_argument("--progress", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--chunk", type=int, default=10)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("trace-eval", parents=[common], help="3D start/end/success of predicted traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--intrinsics", required=True, help="fx,fy,cx,cy")
    p.add_argument("--gt", help="ground-truth traces for RMSE")
    p.add_argument("--exact", action="store_true", help="analytic segment/box collision test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trace_eval)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except BridgeError as exc:
        log.error("predictor bridge failure: %s", exc)
        return EXIT_BRIDGE
    except SchemaError as exc:
        log.error("schema validation failed: %s", exc)
        return EXIT_SCHEMA
    except json.JSONDecodeError as exc:
        log.error("malformed JSON input: %s", exc)
        return EXIT_SCHEMA
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (PredictorError, ValueError, KeyError, IndexError) as exc:
        log.error("%s", exc)
        return EXIT_OPERATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
