#!/usr/bin/env python3
"""How much does the forbidden-region continuation of v matter?

Builds the driving fields with the linear and with the constant
extrapolation beyond the turning points, runs the driven evolution under
each, and prints the change in the final target population.  The
wavefunction is evanescent out there, so the answer should be tiny; this
script documents it for any parameter set.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from ffdrive.fastforward import build_flow_fields  # noqa: E402
from ffdrive.grids import Field  # noqa: E402
from ffdrive.model import RunConfig, evaluate_potential, load_config  # noqa: E402
from ffdrive.qdyn import propagate  # noqa: E402
from ffdrive.spectral import solve_eigenproblem  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", help="run configuration file")
    parser.add_argument("--mesh-times", type=int, default=2001)
    args = parser.parse_args()
    config = load_config(args.config) if args.config else RunConfig()
    spec, params, grid = config.spec(), config.params(), config.grid()

    snaps = np.array([0.0, params.tau])
    sols = [
        solve_eigenproblem(evaluate_potential(spec, params, grid, t), params, params.n + 5)
        for t in snaps
    ]
    psi0 = Field(grid, sols[0].states[params.n].astype(complex), 0.0)

    final = {}
    for extension in ("linear", "constant"):
        flow = build_flow_fields(
            spec, params, grid, params.n,
            mesh_times=args.mesh_times, extension=extension,
        )
        _, hist = propagate(
            psi0, spec, params, flow=flow, dt=config.dt_quantum,
            snapshot_times=snaps, k_track=params.n + 5, eigensolutions=sols,
        )
        final[extension] = hist.at_final()[params.n]
        print(f"{extension:9s} extension: p_n(tau) = {final[extension]:.6f}")
    print(f"difference: {abs(final['linear'] - final['constant']):.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
