#!/usr/bin/env python3
"""Self-convergence study of the diagonal-vessel pulse problem."""
import argparse
import sys
from pathlib import Path

try:
    from vesselfem import verify
except ImportError:
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
    from vesselfem import verify


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--case", type=int, default=1, choices=(1, 2, 3))
    parser.add_argument("--levels", default="4,8,16")
    parser.add_argument("--fine", type=int, default=32)
    args = parser.parse_args()
    levels = [int(v) for v in args.levels.split(",")]

    report = verify.self_convergence(args.case, coarse_levels=levels, fine_n=args.fine)
    print(f"case {args.case}, reference n = {args.fine}")
    print("   h        err3d        err1d        rel3d        rel1d")
    for i, h in enumerate(report.h_labels):
        print(f"  1/{report.levels[i]:<4d} {report.err3[i]:.4e}  {report.err1[i]:.4e}"
              f"  {report.rel3[i]:.4e}  {report.rel1[i]:.4e}")
    print("  rates 3d:", ", ".join(f"{r:.2f}" for r in report.rates3()))
    print("  rates 1d:", ", ".join(f"{r:.2f}" for r in report.rates1()))
    print(f"  fine-run vessel mass at T: {report.fine_vessel_mass:.4e}")
    print(f"  max solve residual: {report.max_residual:.2e}")


if __name__ == "__main__":
    main()
