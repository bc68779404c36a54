"""Reference worker for the external bridge: answers hop queries with the oracle.

    python -m hoplab.oracle_worker --gt traj.jsonl --chunk 10

Reads one JSON request per line on stdin and writes one ``{"hop": x}`` line
per request on stdout.
"""

from __future__ import annotations

import argparse
import json
import sys

from .predictors import HopQuery, OraclePredictor, ProgressTable
from .trajectory import read_trajectories, sample_sequence


def serve(predictor: OraclePredictor, stdin=sys.stdin, stdout=sys.stdout) -> int:
    for line in stdin:
        if not line.strip():
            continue
        query = HopQuery.from_json(json.loads(line))
        hop = predictor.predict_hop(query)
        stdout.write(json.dumps({"hop": hop}) + "\n")
        stdout.flush()
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--gt", required=True, help="trajectory JSONL holding the ground truth")
    ap.add_argument("--chunk", type=int, default=10)
    args = ap.parse_args(argv)
    seqs = [sample_sequence(t, args.chunk) for t in read_trajectories(args.gt)]
    return serve(OraclePredictor(ProgressTable.from_sequences(seqs)))


if __name__ == "__main__":
    sys.exit(main())
