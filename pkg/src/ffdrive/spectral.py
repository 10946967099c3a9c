"""Instantaneous eigenproblem of H0(t) and eigenstate populations.

The Hamiltonian is discretized with the sinc (Fourier-grid) kinetic matrix,
which is spectrally accurate on a uniform grid: doubling the grid changes
converged eigenvalues at the 1e-11 level, far below the tolerances used
anywhere downstream.  Only the lowest K pairs are extracted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .errors import NumericalError
from .grids import Field, Grid1D, require_same_grid
from .model import PhysicalParams

_BOUNDARY_DECAY = 1e-8

_kinetic_cache: dict = {}


def kinetic_matrix(grid: Grid1D, params: PhysicalParams) -> np.ndarray:
    """(hbar^2/2m) times the sinc-basis second-derivative matrix."""
    key = (grid.n, round(grid.dq, 15), params.hbar, params.mass)
    cached = _kinetic_cache.get(key)
    if cached is not None:
        return cached
    kmax = np.pi / grid.dq
    idx = np.arange(grid.n)
    dij = idx[:, None] - idx[None, :]
    off = np.where(dij == 0, 1, dij)
    tmat = np.where(
        dij == 0,
        kmax**2 / 3.0,
        (2.0 * kmax**2 / np.pi**2) * ((-1.0) ** dij) / off**2,
    )
    tmat *= params.hbar**2 / (2.0 * params.mass)
    tmat.flags.writeable = False
    if len(_kinetic_cache) > 8:
        _kinetic_cache.clear()
    _kinetic_cache[key] = tmat
    return tmat


@dataclass(frozen=True)
class EigenSolution:
    """Lowest-K eigenpairs of H0 at one time.

    Eigenvectors are stored as rows, L2-normalized (sum phi^2 dq = 1) and
    sign-fixed so the first nonzero lobe is positive.
    """

    t: float
    grid: Grid1D
    energies: np.ndarray  # (K,), ascending
    states: np.ndarray  # (K, n) rows

    def __post_init__(self):
        if np.any(np.diff(self.energies) <= 0):
            raise NumericalError("eigenvalues are not strictly increasing")

    @property
    def k_count(self) -> int:
        return len(self.energies)

    def state(self, k: int) -> Field:
        return Field(self.grid, self.states[k], self.t)


def _sign_fix(states: np.ndarray) -> np.ndarray:
    for row in states:
        sig = np.nonzero(np.abs(row) > 1e-8 * np.abs(row).max())[0]
        if sig.size and row[sig[0]] < 0:
            row *= -1.0
    return states


def solve_eigenproblem(
    potential: Field, params: PhysicalParams, k_count: int
) -> EigenSolution:
    """Lowest k_count eigenpairs of -hbar^2/2m d2/dq2 + U on the grid."""
    grid = potential.grid
    if k_count > grid.n // 4:
        raise ValueError(
            f"requested K={k_count} exceeds n/4={grid.n // 4}; "
            "the discretization is untrustworthy that high"
        )
    ham = kinetic_matrix(grid, params) + np.diag(potential.values)
    energies, vecs = eigh(ham, subset_by_index=(0, k_count - 1))
    states = np.ascontiguousarray(vecs.T) / np.sqrt(grid.dq)
    states = _sign_fix(states)
    edge = np.maximum(np.abs(states[:, 0]), np.abs(states[:, -1]))
    peak = np.abs(states).max(axis=1)
    worst = int(np.argmax(edge / peak))
    if edge[worst] > _BOUNDARY_DECAY * peak[worst]:
        raise NumericalError(
            f"eigenstate k={worst} does not decay at the grid boundary "
            f"(edge/peak = {edge[worst] / peak[worst]:.2e}); increase q_max"
        )
    return EigenSolution(t=potential.t, grid=grid, energies=energies, states=states)


def node_count(state: np.ndarray) -> int:
    """Sign changes of an eigenvector, ignoring sub-threshold tails."""
    sig = state[np.abs(state) > 1e-8 * np.abs(state).max()]
    return int(np.sum(np.sign(sig[1:]) * np.sign(sig[:-1]) < 0))


def populations(psi: Field, eig: EigenSolution) -> np.ndarray:
    """p_k = |<phi_k | psi>|^2 on the common grid."""
    require_same_grid(psi.grid, eig.grid, "populations")
    amps = eig.states @ np.conj(psi.values) * psi.grid.dq
    p = np.abs(amps) ** 2
    total = float(p.sum())
    if total > 1.0 + 1e-8:
        raise NumericalError(f"populations sum to {total} > 1 + 1e-8")
    return p
