#!/usr/bin/env python3
"""Sweep (tau, rho) configurations across allocation modes and chart the result.

Expects the artifacts written by ``train_and_calibrate.py``.  Writes
``sweep.csv`` and ``sweep_e_cam.svg`` next to them: camera error against
achieved sparsity, one line per mode.  The guided line should sit below
uniform, which should sit below reverse.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from hess import pipeline, report, sensitivity

GRID = [(1.0, 0.0), (0.97, 0.1), (0.9, 0.5), (0.7, 0.5), (0.4, 0.8)]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--run", default="runs/default",
                    help="directory holding model.bin and scores.json")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--eval-scenes", type=int, default=10)
    args = ap.parse_args()

    run = Path(args.run)
    model = pipeline.ToyModel.load(run / "model.bin")
    table = sensitivity.HessTable.load(run / "scores.json",
                                       expect_fingerprint=model.fingerprint())
    scenes = [pipeline.generate_scene(args.seed + 30_000 + i, n_views=5,
                                      tokens_per_view=7, d_model=24)
              for i in range(args.eval_scenes)]

    rows = pipeline.sweep(model, scenes, table, GRID, seed=args.seed)
    report.write_sweep_csv(rows, run / "sweep.csv")
    report.write_error_chart_svg(rows, run / "sweep_e_cam.svg", metric="e_cam")

    print(f"{'mode':8s} {'tau':>5s} {'rho':>5s} {'sparsity':>9s} {'e_cam':>9s}")
    for r in rows:
        print(f"{r.mode:8s} {r.tau:5.2f} {r.rho:5.2f} {r.sparsity:9.3f} {r.e_cam:9.4f}")
    print(f"wrote {run / 'sweep.csv'} and {run / 'sweep_e_cam.svg'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
