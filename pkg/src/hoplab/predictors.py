"""Hop predictors: the interface standing in for the vision-language model.

Reference predictors read ground-truth progress from a :class:`ProgressTable`
keyed by (trajectory id, frame index). ``ExternalBridge`` forwards queries to a
worker process over a line-delimited JSON protocol.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import shlex
import subprocess
import threading
import zlib
from dataclasses import dataclass
from typing import Iterable, Protocol, runtime_checkable

import numpy as np

from .labeler import hop_label
from .trajectory import SampledSequence, StateObservation

log = logging.getLogger(__name__)

ANCHORS = ("incremental", "forward", "backward")


@dataclass(frozen=True)
class HopQuery:
    task_description: str
    state_init: StateObservation
    state_goal: StateObservation
    state_before: StateObservation
    state_after: StateObservation
    anchor_kind: str = "incremental"

    def __post_init__(self) -> None:
        if self.anchor_kind not in ANCHORS:
            raise ValueError(f"unknown anchor kind {self.anchor_kind!r}")
        ids = {
            s.trajectory_id
            for s in (self.state_init, self.state_goal, self.state_before, self.state_after)
        }
        if len(ids) != 1:
            raise ValueError(f"query mixes states from trajectories {sorted(ids)}")

    def to_json(self) -> dict:
        return {
            "task": self.task_description,
            "init": self.state_init.to_json(),
            "goal": self.state_goal.to_json(),
            "before": self.state_before.to_json(),
            "after": self.state_after.to_json(),
            "anchor": self.anchor_kind,
        }

    @classmethod
    def from_json(cls, obj: dict) -> HopQuery:
        return cls(
            obj["task"],
            StateObservation.from_json(obj["init"]),
            StateObservation.from_json(obj["goal"]),
            StateObservation.from_json(obj["before"]),
            StateObservation.from_json(obj["after"]),
            obj["anchor"],
        )

    def describe(self) -> str:
        return (
            f"{self.state_before.trajectory_id}: {self.anchor_kind} "
            f"frame {self.state_before.frame_index} -> {self.state_after.frame_index}"
        )


@runtime_checkable
class HopPredictor(Protocol):
    """Anything that maps a query to a hop in [-1, 1].

    ``concurrent_safe`` tells callers whether one instance may serve several
    threads at once.
    """

    concurrent_safe: bool

    def predict_hop(self, query: HopQuery) -> float: ...


class PredictorError(RuntimeError):
    """A predictor could not answer a query."""

    def __init__(self, message: str, query: HopQuery | None = None):
        if query is not None:
            message = f"{message} [query: {json.dumps(query.to_json(), sort_keys=True)}]"
        super().__init__(message)
        self.query = query


class ProgressTable:
    """Ground-truth lookup (trajectory id, frame) -> (state index, M)."""

    def __init__(self) -> None:
        self._index: dict[tuple[str, int], tuple[int, int]] = {}

    @classmethod
    def from_sequences(cls, seqs: Iterable[SampledSequence]) -> ProgressTable:
        table = cls()
        for seq in seqs:
            table.add(seq)
        return table

    def add(self, seq: SampledSequence) -> None:
        for i, s in enumerate(seq.states):
            self._index[(s.trajectory_id, s.frame_index)] = (i, seq.M)

    def locate(self, state: StateObservation) -> tuple[int, int]:
        try:
            return self._index[(state.trajectory_id, state.frame_index)]
        except KeyError:
            raise KeyError(f"no ground truth for {state.trajectory_id} frame {state.frame_index}") from None

    def progress(self, state: StateObservation) -> float:
        i, M = self.locate(state)
        return i / M

    def __len__(self) -> int:
        return len(self._index)


class OraclePredictor:
    concurrent_safe = True

    def __init__(self, table: ProgressTable):
        self.table = table

    def oracle_hop(self, query: HopQuery) -> float:
        try:
            return hop_label(self.table.progress(query.state_before), self.table.progress(query.state_after))
        except KeyError as exc:
            raise PredictorError(str(exc), query) from None

    def predict_hop(self, query: HopQuery) -> float:
        return self.oracle_hop(query)


class ConstantPredictor:
    """Returns the same hop for every query."""

    concurrent_safe = True

    def __init__(self, hop: float = 0.0):
        if not -1.0 <= hop <= 1.0:
            raise ValueError("hop must lie in [-1, 1]")
        self.hop = float(hop)

    def predict_hop(self, query: HopQuery) -> float:
        return self.hop


def _query_key(query: HopQuery) -> list[int]:
    return [
        zlib.crc32(query.state_before.trajectory_id.encode()),
        query.state_before.frame_index,
        query.state_after.frame_index,
        ANCHORS.index(query.anchor_kind),
    ]


class NoisyPredictor(OraclePredictor):
    """Oracle hop plus a Gaussian draw seeded by (seed, query), clipped to [-1, 1]."""

    def __init__(self, table: ProgressTable, sigma: float, seed: int = 0):
        super().__init__(table)
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        self.sigma = float(sigma)
        self.seed = int(seed)

    def noise(self, query: HopQuery) -> float:
        rng = np.random.default_rng([self.seed & 0xFFFFFFFF, *_query_key(query)])
        return float(rng.normal(0.0, self.sigma))

    def predict_hop(self, query: HopQuery) -> float:
        return min(1.0, max(-1.0, self.oracle_hop(query) + self.noise(query)))


def quantize_hop(hop: float, n_bins: int) -> float:
    """Snap ``hop`` to the nearest of ``n_bins`` uniform bin centers on [-1, 1]."""
    k = min(max(int(math.floor((hop + 1.0) * n_bins / 2.0)), 0), n_bins - 1)
    return -1.0 + (2 * k + 1) / n_bins


class QuantizedPredictor:
    """Discretized output of a wrapped predictor (oracle by default)."""

    def __init__(self, base: HopPredictor, n_bins: int):
        if n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        self.base = base
        self.n_bins = int(n_bins)
        self.concurrent_safe = base.concurrent_safe

    def predict_hop(self, query: HopQuery) -> float:
        return quantize_hop(self.base.predict_hop(query), self.n_bins)


class OODPredictor(OraclePredictor):
    """Oracle outside a window of states; inside it the anchored predictions split apart.

    The window is ``[start, end)`` as a fraction of M, tested on the AFTER
    state's index. Forward-anchor hops gain ``divergence / 2``, backward-anchor
    hops lose it; incremental hops gain ``incremental_bias`` (0 by default).
    """

    def __init__(
        self,
        table: ProgressTable,
        window: tuple[float, float],
        divergence: float,
        incremental_bias: float = 0.0,
    ):
        super().__init__(table)
        start, end = window
        if not (0.0 <= start <= 1.0 and 0.0 <= end <= 1.0) or end < start:
            raise ValueError(f"invalid OOD window {window!r}")
        if not 0.0 <= divergence <= 2.0:
            raise ValueError("divergence must lie in [0, 2]")
        self.window = (float(start), float(end))
        self.divergence = float(divergence)
        self.incremental_bias = float(incremental_bias)

    def in_window(self, state: StateObservation) -> bool:
        i, M = self.table.locate(state)
        start, end = self.window
        return start * M <= i < end * M

    def predict_hop(self, query: HopQuery) -> float:
        h = self.oracle_hop(query)
        if not self.in_window(query.state_after):
            return h
        if query.anchor_kind == "forward":
            h += self.divergence / 2
        elif query.anchor_kind == "backward":
            h -= self.divergence / 2
        else:
            h += self.incremental_bias
        return min(1.0, max(-1.0, h))


# -- external worker bridge --------------------------------------------------


class BridgeError(PredictorError):
    pass


class BridgeSpawnError(BridgeError):
    pass


class BridgeTimeoutError(BridgeError):
    pass


class BridgeProtocolError(BridgeError):
    """The worker replied with something that is not a single ``{"hop": x}`` line."""


class HopRangeError(BridgeError):
    pass


def encode_request(query: HopQuery) -> str:
    return json.dumps(query.to_json(), separators=(",", ":"), ensure_ascii=False) + "\n"


def decode_response(line: str, query: HopQuery | None = None) -> float:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise BridgeProtocolError(f"unparseable worker response {line!r}: {exc}", query) from None
    if not isinstance(obj, dict) or "hop" not in obj:
        raise BridgeProtocolError(f"worker response lacks 'hop': {line!r}", query)
    hop = obj["hop"]
    if isinstance(hop, bool) or not isinstance(hop, (int, float)) or not math.isfinite(hop):
        raise BridgeProtocolError(f"worker hop is not a finite number: {line!r}", query)
    if not -1.0 <= hop <= 1.0:
        raise HopRangeError(f"worker hop {hop!r} outside [-1, 1]", query)
    return float(hop)


_EOF = object()


class ExternalBridge:
    """Serialized channel to one worker process.

    Each query is written as one JSON line to the worker's stdin; one
    ``{"hop": x}`` line is read back from its stdout.
    """

    concurrent_safe = False

    def __init__(self, command: str | list[str], timeout: float = 60.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self._lock = threading.Lock()
        self._lines: queue.Queue = queue.Queue()
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise BridgeSpawnError(f"cannot start worker {self.command!r}: {exc}") from None
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(_EOF)

    def predict_hop(self, query: HopQuery) -> float:
        with self._lock:
            if self._proc.poll() is not None and self._lines.empty():
                raise BridgeSpawnError(f"worker exited with status {self._proc.returncode}", query)
            try:
                assert self._proc.stdin is not None
                self._proc.stdin.write(encode_request(query))
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise BridgeSpawnError(f"worker closed its input: {exc}", query) from None
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                raise BridgeTimeoutError(f"no worker response within {self.timeout} s", query) from None
            if line is _EOF:
                self._lines.put(_EOF)
                raise BridgeProtocolError("worker closed its output before answering", query)
            return decode_response(line.rstrip("\n"), query)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                if self._proc.stdin:
                    self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> ExternalBridge:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# -- spec strings ------------------------------------------------------------


@dataclass(frozen=True)
class PredictorSpec:
    kind: str
    noise_sigma: float = 0.0
    n_hop_bins: int = 0
    ood_window: tuple[float, float] = (0.0, 0.0)
    ood_divergence: float = 0.0
    ood_incremental_bias: float = 0.0
    seed: int = 0
    external_command: str = ""
    constant: float = 0.0

    @classmethod
    def parse(cls, text: str, seed: int | None = None) -> PredictorSpec:
        """Parse ``oracle``, ``noisy:SIGMA[,SEED]``, ``quantized:N``,
        ``ood:START,END,DIVERGENCE[,INC_BIAS]``, ``constant:H`` or ``external:CMD``."""
        kind, _, arg = text.partition(":")
        kind = kind.strip()
        try:
            if kind == "oracle":
                return cls("oracle")
            if kind == "noisy":
                parts = arg.split(",")
                s = int(parts[1]) if len(parts) > 1 and parts[1] else (seed or 0)
                return cls("noisy", noise_sigma=float(parts[0]), seed=s)
            if kind == "quantized":
                return cls("quantized", n_hop_bins=int(arg))
            if kind == "ood":
                parts = [float(x) for x in arg.split(",")]
                bias = parts[3] if len(parts) > 3 else 0.0
                return cls("ood", ood_window=(parts[0], parts[1]), ood_divergence=parts[2], ood_incremental_bias=bias)
            if kind == "constant":
                return cls("constant", constant=float(arg))
            if kind == "external":
                if not arg.strip():
                    raise ValueError("external predictor needs a command")
                return cls("external", external_command=arg)
        except (ValueError, IndexError) as exc:
            raise ValueError(f"bad predictor spec {text!r}: {exc}") from None
        raise ValueError(f"unknown predictor kind {kind!r}")

    def build(self, table: ProgressTable, timeout: float = 60.0) -> HopPredictor:
        if self.kind == "oracle":
            return OraclePredictor(table)
        if self.kind == "noisy":
            return NoisyPredictor(table, self.noise_sigma, self.seed)
        if self.kind == "quantized":
            return QuantizedPredictor(OraclePredictor(table), self.n_hop_bins)
        if self.kind == "ood":
            return OODPredictor(table, self.ood_window, self.ood_divergence, self.ood_incremental_bias)
        if self.kind == "constant":
            return ConstantPredictor(self.constant)
        if self.kind == "external":
            return ExternalBridge(self.external_command, timeout=timeout)
        raise ValueError(f"unknown predictor kind {self.kind!r}")
