"""Wavefunction propagation under H0(t), optionally plus the driving field.

Second-order split-step Fourier scheme: kinetic half-steps in momentum
representation, one full potential step evaluated at the time midpoint.
Each factor is exactly unitary, so norm drift only reflects floating-point
roundoff; it is monitored and bounded at 1e-8 per run.  Periodic-boundary
wraparound is excluded by a boundary-density guard instead of absorbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .fastforward import FlowFields
from .grids import Field, require_same_grid
from .model import PhysicalParams, PotentialSpec, evaluate_potential
from .spectral import EigenSolution, populations, solve_eigenproblem

DEFAULT_SNAPSHOTS = 101
DEFAULT_K_TRACK = 41
_NORM_DRIFT_LIMIT = 1e-8
_BOUNDARY_DENSITY_LIMIT = 1e-6


@dataclass(frozen=True)
class PopulationHistory:
    """p_k(t_j) against the instantaneous eigenbasis of the bare Hamiltonian."""

    times: np.ndarray  # (S,)
    values: np.ndarray  # (S, K)

    def __post_init__(self):
        if np.any(self.values < -1e-12):
            raise NumericalError("negative population encountered")
        sums = self.values.sum(axis=1)
        if np.any(sums > 1.0 + 1e-8):
            raise NumericalError(f"population row sums to {sums.max()} > 1 + 1e-8")

    @property
    def k_count(self) -> int:
        return self.values.shape[1]

    def at_final(self) -> np.ndarray:
        return self.values[-1]


def _support_window(psi0: Field) -> np.ndarray:
    """Mask of grid points holding the state's density envelope."""
    density = np.abs(psi0.values) ** 2
    idx = np.nonzero(density > 1e-3 * density.max())[0]
    mask = np.zeros(psi0.grid.n, dtype=bool)
    mask[idx[0] : idx[-1] + 1] = True
    return mask


def _check_dt(psi0: Field, u_scale: float, params: PhysicalParams, dt: float) -> None:
    """The fastest populated phase, (E_kin + |U|)/hbar on the state's
    envelope, must advance by less than pi per step."""
    grid = psi0.grid
    k = grid.wavenumbers()
    ft = np.fft.fft(psi0.values)
    weight = np.abs(ft) ** 2
    e_kin = float(
        (params.hbar**2 / (2.0 * params.mass))
        * np.sum(k**2 * weight)
        / np.sum(weight)
    )
    e_char = e_kin + abs(u_scale)
    if dt > np.pi * params.hbar / e_char:
        raise NumericalError(
            f"time step {dt} does not resolve pi*hbar/E = "
            f"{np.pi * params.hbar / e_char:.3e}; reduce dt_quantum"
        )


def propagate(
    psi0: Field,
    spec: PotentialSpec,
    params: PhysicalParams,
    *,
    flow: FlowFields | None = None,
    dt: float | None = None,
    snapshot_times: np.ndarray | None = None,
    k_track: int = DEFAULT_K_TRACK,
    eigensolutions: list[EigenSolution] | None = None,
    t_final: float | None = None,
) -> tuple[Field, PopulationHistory]:
    """Evolve psi0 from t=0 to t_final (default tau), recording populations.

    flow=None propagates under the bare Hamiltonian; otherwise the driving
    potential is added, interpolated linearly in t from its construction
    mesh.  Populations at each snapshot are overlaps with freshly solved
    (or supplied) eigenstates of the bare Hamiltonian.
    """
    grid = psi0.grid
    t_end = params.tau if t_final is None else t_final
    if dt is None:
        dt = 1e-4 * t_end
    if snapshot_times is None:
        snapshot_times = np.linspace(0.0, t_end, DEFAULT_SNAPSHOTS)
    snapshot_times = np.asarray(snapshot_times, dtype=float)
    if abs(psi0.norm_sq() - 1.0) > 1e-8:
        raise ValueError("initial state must be normalized")
    if eigensolutions is not None and len(eigensolutions) != len(snapshot_times):
        raise ValueError("need one eigensolution per snapshot time")

    window = _support_window(psi0)
    u_max = max(
        float(np.abs(evaluate_potential(spec, params, grid, t).values[window]).max())
        for t in np.linspace(0.0, t_end, 9)
    )
    if flow is not None:
        u_max += max(
            float(np.abs(flow.potential_at(t)[window]).max())
            for t in np.linspace(0.0, t_end, 9)
        )
    _check_dt(psi0, u_max, params, dt)

    kin_phase = -(params.hbar * grid.wavenumbers() ** 2 / (2.0 * params.mass)) / 2.0
    psi = psi0.values.astype(complex).copy()
    pops = np.zeros((len(snapshot_times), k_track))
    dq = grid.dq

    for j, t_snap in enumerate(snapshot_times):
        density_edge = max(abs(psi[0]) ** 2, abs(psi[-1]) ** 2)
        if density_edge > _BOUNDARY_DENSITY_LIMIT:
            raise NumericalError(
                f"probability density {density_edge:.3e} at the grid boundary "
                f"(t={t_snap}); increase q_max"
            )
        if eigensolutions is not None:
            eig = eigensolutions[j]
            require_same_grid(eig.grid, grid, "propagate snapshots")
        else:
            pot = evaluate_potential(spec, params, grid, t_snap)
            eig = solve_eigenproblem(pot, params, k_track)
        pops[j] = populations(Field(grid, psi, t_snap), eig)[:k_track]
        if j == len(snapshot_times) - 1:
            break
        span = snapshot_times[j + 1] - t_snap
        steps = max(1, int(round(span / dt)))
        dt_eff = span / steps
        kin = np.exp(1j * kin_phase * dt_eff)
        t = t_snap
        for _ in range(steps):
            t_mid = t + dt_eff / 2.0
            u_row = evaluate_potential(spec, params, grid, t_mid).values
            if flow is not None:
                u_row = u_row + flow.potential_at(t_mid)
            psi = np.fft.ifft(kin * np.fft.fft(psi))
            psi = np.exp(-1j * u_row * dt_eff / params.hbar) * psi
            psi = np.fft.ifft(kin * np.fft.fft(psi))
            t += dt_eff

    norm = float(np.sum(np.abs(psi) ** 2) * dq)
    if abs(norm - 1.0) > _NORM_DRIFT_LIMIT:
        raise NumericalError(f"norm drifted to {norm} (>{_NORM_DRIFT_LIMIT} off unity)")
    final = Field(grid, psi, float(snapshot_times[-1]))
    return final, PopulationHistory(times=snapshot_times, values=pops)


@dataclass(frozen=True)
class DensityOverlay:
    """Aligned final density |psi|^2 and target eigenstate density phi_n^2."""

    q: np.ndarray
    psi_sq: np.ndarray
    phi_sq: np.ndarray
    psi_minima: np.ndarray
    phi_minima: np.ndarray


def _interior_minima(q: np.ndarray, density: np.ndarray) -> np.ndarray:
    """Positions of strict local minima inside the density's support,
    refined to sub-cell accuracy by a parabola through each dip."""
    support = np.nonzero(density > 1e-3 * density.max())[0]
    lo, hi = support[0], support[-1]
    d = density[lo : hi + 1]
    idx = np.nonzero((d[1:-1] < d[:-2]) & (d[1:-1] < d[2:]))[0] + 1 + lo
    y_m, y_0, y_p = density[idx - 1], density[idx], density[idx + 1]
    curv = y_m - 2.0 * y_0 + y_p
    shift = np.where(curv > 0, 0.5 * (y_m - y_p) / np.where(curv > 0, curv, 1.0), 0.0)
    return q[idx] + shift * (q[1] - q[0])


def final_density_overlay(psi_final: Field, eig: EigenSolution, n: int) -> DensityOverlay:
    """Table of |psi(q, tau)|^2 against phi_n(q, tau)^2, plus their minima."""
    require_same_grid(psi_final.grid, eig.grid, "density overlay")
    q = psi_final.grid.points
    psi_sq = np.abs(psi_final.values) ** 2
    phi_sq = eig.states[n] ** 2
    return DensityOverlay(
        q=q,
        psi_sq=psi_sq,
        phi_sq=phi_sq,
        psi_minima=_interior_minima(q, psi_sq),
        phi_minima=_interior_minima(q, phi_sq),
    )
