#!/usr/bin/env python3
"""Zero-source stability experiment: the discrete energy must never increase."""
import argparse
import sys
from pathlib import Path

import numpy as np

try:
    import vesselfem  # noqa: F401
except ImportError:
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from vesselfem.dg1d import DgParams
from vesselfem.fem3d import ScalarField3, VectorField3
from vesselfem.geometry import ConstantPermeability, ConstantRadius, VesselGeometry
from vesselfem.stepper import CoupledSystem, TransportProblem


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=8)
    parser.add_argument("--steps", type=int, default=50)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    geom = VesselGeometry(
        (0, 0, -0.5), (0, 0, 0.5), ConstantRadius(0.05), ConstantPermeability(1.0)
    )
    dt = 0.1 / args.n
    problem = TransportProblem(
        geometry=geom,
        kappa=ScalarField3.constant(1.0),
        kappa_hat=lambda s: np.broadcast_to(1.0, np.shape(s)),
        velocity=VectorField3.constant((0.0, 0.0, 1.0)),
        u_hat=1.0,
        source3=ScalarField3.zero(),
        source1=None,
        c_in=None,
        dirichlet=None,
        c0=None,
        c0_hat=None,
        t_end=args.steps * dt,
        dg=DgParams(1, 50.0),
        dt=dt,
    )
    system = CoupledSystem(problem, n_cells=args.n)
    rng = np.random.default_rng(args.seed)
    state = system.initialize()
    state.c = rng.standard_normal(system.fem.n_dofs)
    state.c[system.fem.dirichlet_mask] = 0.0
    state.c_hat = rng.standard_normal(system.dg.n_dofs)

    energies = [system.energy(state)]
    for _ in range(args.steps):
        state = system.step(state)
        energies.append(system.energy(state))
    energies = np.array(energies)
    rises = np.diff(energies)
    print(f"n={args.n}, {args.steps} steps, dt={dt:g}")
    print(f"  E[0] = {energies[0]:.6e}   E[end] = {energies[-1]:.6e}")
    print(f"  max single-step increase: {rises.max():.3e} (must be <= 1e-10)")
    print(f"  max solve residual: {system.factorization.max_residual:.2e}")


if __name__ == "__main__":
    main()
