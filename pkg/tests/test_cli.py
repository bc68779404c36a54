from __future__ import annotations

import json
import sys

import pytest

from hoplab.cli import EXIT_BRIDGE, EXIT_IO, EXIT_OK, EXIT_OPERATION, EXIT_SCHEMA, main
from hoplab.io import manifest_path, read_csv
from hoplab.schemas import HOP_SAMPLE_SCHEMA, MANIFEST_SCHEMA, TRAJECTORY_SCHEMA, validate_record
from hoplab.simulate import simulate
from hoplab.trajectory import read_trajectories


def run(*args) -> int:
    return main([str(a) for a in args])


@pytest.fixture
def traj_file(tmp_path):
    out = tmp_path / "traj.jsonl"
    assert run("simulate", "--n", 6, "--length", "40,200", "--segments", "1,4", "--seed", 3, "--out", out) == EXIT_OK
    return out


class TestSimulate:
    def test_minimal(self):
        (t,) = simulate(1, (2, 2), (1, 1), seed=0)
        assert t.frame_count == 2 and t.keyframe_indices == (0, 1)

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        run("simulate", "--n", 5, "--seed", 4, "--out", a)
        run("simulate", "--n", 5, "--seed", 4, "--out", b)
        assert a.read_bytes() == b.read_bytes()

    def test_hundred_schema_valid(self, tmp_path):
        out = tmp_path / "t.jsonl"
        assert run("simulate", "--n", 100, "--length", "50,500", "--segments", "2,8", "--seed", 7, "--out", out) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 100
        for line in lines:
            validate_record(json.loads(line), TRAJECTORY_SCHEMA)
        trajs = read_trajectories(out)
        assert all(50 <= t.frame_count <= 500 and 2 <= t.n_segments <= 8 for t in trajs)

    @pytest.mark.parametrize("length, segments", [("1,5", "1,1"), ("10,5", "1,2"), ("5,10", "5,6"), ("10,20", "0,2")])
    def test_invalid_ranges(self, tmp_path, length, segments):
        rc = run("simulate", "--length", length, "--segments", segments, "--out", tmp_path / "x.jsonl")
        assert rc == EXIT_OPERATION


class TestPipeline:
    def test_oracle_end_to_end(self, tmp_path, traj_file):
        samples, prog, vocs = tmp_path / "s.jsonl", tmp_path / "p.csv", tmp_path / "v.csv"
        assert run("label", "--in", traj_file, "--out", samples, "--seed", 7) == EXIT_OK
        for line in samples.read_text().splitlines():
            validate_record(json.loads(line), HOP_SAMPLE_SCHEMA)
        assert run("reconstruct", "--in", traj_file, "--out", prog, "--predictor", "oracle") == EXIT_OK
        assert run("evaluate", "--progress", prog, "--gt", traj_file, "--out", vocs) == EXIT_OK
        rows = read_csv(vocs)
        assert len(rows) == 7 and rows[-1]["trajectory_id"] == "MEAN"
        for r in rows:
            assert float(r["voc_forward"]) == pytest.approx(100.0)
            assert float(r["voc_reverse"]) == pytest.approx(100.0)
        for out in (samples, prog, vocs):
            m = json.loads(manifest_path(out).read_text())
            validate_record(m, MANIFEST_SCHEMA)
            assert m["outputs"] == [out.name]

    def test_jobs_do_not_change_output(self, tmp_path, traj_file):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run("reconstruct", "--in", traj_file, "--out", a, "--predictor", "noisy:0.1,3")
        run("reconstruct", "--in", traj_file, "--out", b, "--predictor", "noisy:0.1,3", "--jobs", 4)
        assert a.read_bytes() == b.read_bytes()
        c, d = tmp_path / "c.jsonl", tmp_path / "d.jsonl"
        run("label", "--in", traj_file, "--out", c)
        run("label", "--in", traj_file, "--out", d, "--jobs", 3)
        assert c.read_bytes() == d.read_bytes()

    def test_external_lanes(self, tmp_path, traj_file):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        worker = f"external:{sys.executable} -m hoplab.oracle_worker --gt {traj_file}"
        assert run("reconstruct", "--in", traj_file, "--out", a, "--predictor", worker, "--jobs", 3) == EXIT_OK
        run("reconstruct", "--in", traj_file, "--out", b)
        assert a.read_bytes() == b.read_bytes()

    def test_env_seed_override(self, tmp_path, traj_file, monkeypatch):
        a, b, c = (tmp_path / f"{n}.jsonl" for n in "abc")
        run("label", "--in", traj_file, "--out", a, "--seed", 1)
        monkeypatch.setenv("HOPLAB_SEED", "1")
        run("label", "--in", traj_file, "--out", b, "--seed", 99)
        monkeypatch.setenv("HOPLAB_SEED", "2")
        run("label", "--in", traj_file, "--out", c, "--seed", 1)
        assert a.read_bytes() == b.read_bytes() != c.read_bytes()
        assert json.loads(manifest_path(b).read_text())["seed"] == 1


class TestExitCodes:
    def test_missing_input(self, tmp_path):
        assert run("reconstruct", "--in", tmp_path / "nope.jsonl", "--out", tmp_path / "p.csv") == EXIT_IO
        assert not (tmp_path / "p.csv").exists()

    def test_schema_violation(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "x", "task": "t", "views": ["a"], "frame_count": "ten", "keyframes": [0, 9]}\n')
        assert run("label", "--in", bad, "--out", tmp_path / "s.jsonl") == EXIT_SCHEMA

    def test_garbage_worker(self, tmp_path, traj_file, caplog):
        w = tmp_path / "w.py"
        w.write_text("import sys\nfor line in sys.stdin:\n    print('garbage', flush=True)\n")
        out = tmp_path / "p.csv"
        rc = run("reconstruct", "--in", traj_file, "--out", out, "--predictor", f"external:{sys.executable} {w}")
        assert rc == EXIT_BRIDGE
        assert not out.exists()
        assert '"anchor"' in caplog.text

    def test_bad_predictor_spec(self, tmp_path, traj_file):
        assert run("reconstruct", "--in", traj_file, "--out", tmp_path / "p.csv", "--predictor", "magic") == EXIT_OPERATION

    def test_evaluate_unknown_trajectory(self, tmp_path, traj_file):
        prog = tmp_path / "p.csv"
        run("reconstruct", "--in", traj_file, "--out", prog)
        other = tmp_path / "other.jsonl"
        run("simulate", "--n", 1, "--seed", 99, "--out", other)
        assert run("evaluate", "--progress", prog, "--gt", other, "--out", tmp_path / "v.csv") == EXIT_SCHEMA

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "hoplab 0.1.0" in capsys.readouterr().out


def test_trace_eval(tmp_path):
    from hoplab.geometry import CameraIntrinsics, project

    K = CameraIntrinsics(600, 600, 320, 240)
    uvd = lambda pts: [list(project(*p, K).as_tuple()) for p in pts]  # noqa: E731
    good = [(0.0, 0.0, 1.0), (0.2, -0.2, 1.0), (0.5, 0.0, 1.0)]
    bad = [(0.0, 0.0, 1.0), (0.2, 0.0, 1.0), (0.5, 0.0, 1.0)]
    traces = tmp_path / "t.jsonl"
    traces.write_text("".join(json.dumps({"id": i, "points": uvd(p)}) + "\n" for i, p in [("good", good), ("bad", bad)]))
    scene = tmp_path / "s.json"
    scene.write_text(
        json.dumps(
            {
                "target_points": [[0, 0, 1]],
                "dest_box": {"min": [0.4, -0.1, 0.9], "max": [0.6, 0.1, 1.1]},
                "obstacles": [{"min": [0.15, -0.05, 0.95], "max": [0.25, 0.05, 1.05]}],
                "start_radius": 0.02,
                "end_margin": 0.0,
                "clearance": 0.01,
            }
        )
    )
    gt = tmp_path / "gt.jsonl"
    gt.write_text(json.dumps({"id": "good", "points": uvd(good)}) + "\n")
    out = tmp_path / "r.csv"
    rc = run("trace-eval", "--traces", traces, "--scene", scene, "--intrinsics", "600,600,320,240", "--gt", gt, "--out", out)
    assert rc == EXIT_OK
    rows = {r["id"]: r for r in read_csv(out)}
    assert rows["good"]["success"] == "1" and float(rows["good"]["rmse"]) == 0.0
    assert rows["bad"]["collision_free"] == "0" and rows["bad"]["rmse"] == ""
