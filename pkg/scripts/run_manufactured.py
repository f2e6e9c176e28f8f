#!/usr/bin/env python3
"""Run the vertical-vessel verification study and print the error tables."""
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
    parser.add_argument("--levels", default="4,8,16")
    parser.add_argument("--degree", type=int, default=1)
    parser.add_argument("--epsilon", type=int, default=1)
    parser.add_argument("--sigma", type=float, default=50.0)
    args = parser.parse_args()
    levels = [int(v) for v in args.levels.split(",")]

    report = verify.convergence_study(
        levels, degree=args.degree, epsilon=args.epsilon, sigma=args.sigma,
        on_level=lambda n, system, state, rr: print(
            f"  level n={n}: {rr.n_steps} steps, {rr.wall_time:.1f}s, "
            f"max residual {rr.max_residual:.2e}"
        ),
    )
    print("\n   h        grad3        l2_3        grad1        l2_1")
    for i, h in enumerate(report.h_labels):
        print(f"  1/{levels[i]:<4d} {report.grad3[i]:.4e}  {report.l2_3[i]:.4e}"
              f"  {report.grad1[i]:.4e}  {report.l2_1[i]:.4e}")
    for col in ("grad3", "l2_3", "grad1", "l2_1"):
        rates = ", ".join(f"{r:.2f}" for r in report.rates(col))
        print(f"  rates {col}: {rates}")


if __name__ == "__main__":
    main()
