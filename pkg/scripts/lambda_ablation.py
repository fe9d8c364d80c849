#!/usr/bin/env python3
"""Re-run one sparse configuration under different sensitivity blends.

The table stores the camera and point columns separately, so each lambda is a
recombination of frozen scores; no re-calibration happens.  Writes
``ablation.csv`` into the run directory.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from hess import pipeline, report, sensitivity


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--run", default="runs/default",
                    help="directory holding model.bin and scores.json")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--eval-scenes", type=int, default=10)
    ap.add_argument("--tau", type=float, default=0.7)
    ap.add_argument("--rho", type=float, default=0.5)
    ap.add_argument("--lambdas", default="0,0.25,0.5,0.75,1")
    args = ap.parse_args()

    run = Path(args.run)
    model = pipeline.ToyModel.load(run / "model.bin")
    table = sensitivity.HessTable.load(run / "scores.json",
                                       expect_fingerprint=model.fingerprint())
    scenes = [pipeline.generate_scene(args.seed + 30_000 + i, n_views=5,
                                      tokens_per_view=7, d_model=24)
              for i in range(args.eval_scenes)]
    lambdas = [float(v) for v in args.lambdas.split(",")]

    rows = pipeline.ablate_lambda(model, scenes, table, lambdas,
                                  args.tau, args.rho, seed=args.seed)
    report.write_ablation_csv(rows, run / "ablation.csv")
    for r in rows:
        print(f"lambda={r.lam:4.2f} sparsity={r.sparsity:.3f} "
              f"e_cam={r.e_cam:.4f} e_pc={r.e_pc:.4f}")
    print(f"wrote {run / 'ablation.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
