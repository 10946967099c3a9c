"""Classical trajectory ensembles under the bare plus driving potential.

Ensembles start uniformly spaced in the angle variable on an energy shell,
are integrated with a symplectic drift-kick-drift (leapfrog) scheme whose
force is evaluated at half-step times, and end in an angle histogram on
the final shell.  Initialization is deterministic, so runs are
bit-reproducible for a given configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .fastforward import FlowFields
from .grids import Grid1D
from .model import PhysicalParams, PotentialSpec, potential_force
from .wkb import EnergyShell, angle_tables

_ON_SHELL_TOL = 1e-8
_OFF_SHELL_LIMIT = 0.05


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Phase-space points at one time."""

    t: float
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        if len(self.q) < 2:
            raise ValueError("an ensemble needs at least two points")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise NumericalError("non-finite phase-space point in ensemble")

    @property
    def size(self) -> int:
        return len(self.q)

    def energies(self, spec: PotentialSpec, params: PhysicalParams) -> np.ndarray:
        u = np.asarray(spec.value(self.q, self.t, params), dtype=float)
        return self.p**2 / (2.0 * params.mass) + u


@dataclass(frozen=True)
class AngleDistribution:
    """Normalized histogram of angles over [0, 2 pi)."""

    edges: np.ndarray  # (M+1,)
    density: np.ndarray  # (M,), units 1/radian
    n_samples: int

    def __post_init__(self):
        width = np.diff(self.edges)
        total = float(np.sum(self.density * width))
        if abs(total - 1.0) > 1e-12:
            raise NumericalError(f"angle histogram integrates to {total}, not 1")
        if np.any(self.density < 0):
            raise NumericalError("negative angle density")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])


def sample_shell_uniform_angle(shell: EnergyShell, n_points: int) -> TrajectoryEnsemble:
    """n_points phase-space points with angles theta_i = 2 pi i / N.

    theta in [0, pi] maps onto the upper branch (p >= 0) by integrating the
    on-shell motion from the left turning point; the lower branch mirrors
    with p < 0.
    """
    tables = angle_tables(shell)
    theta = 2.0 * np.pi * np.arange(n_points) / n_points
    q, p = tables.point_from_theta(theta)
    h0 = p**2 / (2.0 * shell.params.mass) + np.asarray(
        shell.spec.value(q, shell.t, shell.params), dtype=float
    )
    worst = float(np.abs(h0 - shell.energy).max())
    if worst > _ON_SHELL_TOL * abs(shell.energy):
        raise NumericalError(
            f"shell sampling is off-shell by {worst:.3e} (limit "
            f"{_ON_SHELL_TOL * abs(shell.energy):.3e})"
        )
    return TrajectoryEnsemble(t=shell.t, q=q, p=p)


def integrate_ensemble(
    ens: TrajectoryEnsemble,
    spec: PotentialSpec,
    params: PhysicalParams,
    grid: Grid1D,
    *,
    flow: FlowFields | None = None,
    dt: float | None = None,
    snapshot_times: np.ndarray | None = None,
    t_final: float | None = None,
) -> list[TrajectoryEnsemble]:
    """Leapfrog integration with the force at half-step times.

    Force = -dU0/dq (analytic) plus, when driving is on, m * a interpolated
    cubically in q and linearly in t from the flow-field mesh
    (dU_drive/dq = -m a by construction).  Trajectories leaving the grid
    domain are an error.
    """
    t_end = params.tau if t_final is None else t_final
    if dt is None:
        dt = 1e-4 * t_end
    if snapshot_times is None:
        snapshot_times = np.array([ens.t, t_end])
    snapshot_times = np.asarray(snapshot_times, dtype=float)
    if abs(snapshot_times[0] - ens.t) > 1e-12:
        raise ValueError("first snapshot must coincide with the ensemble time")

    q = ens.q.astype(float).copy()
    p = ens.p.astype(float).copy()
    mass = params.mass
    history = [TrajectoryEnsemble(t=ens.t, q=q.copy(), p=p.copy())]

    def total_force(qq: np.ndarray, t: float) -> np.ndarray:
        f = potential_force(spec, params, qq, t)
        if flow is not None:
            f = f + mass * flow.acceleration_ev(qq, t)
        return f

    for j in range(len(snapshot_times) - 1):
        span = snapshot_times[j + 1] - snapshot_times[j]
        steps = max(1, int(round(span / dt)))
        dt_eff = span / steps
        t = snapshot_times[j]
        for _ in range(steps):
            q += p * (dt_eff / 2.0) / mass
            p += total_force(q, t + dt_eff / 2.0) * dt_eff
            q += p * (dt_eff / 2.0) / mass
            t += dt_eff
            if np.any((q < grid.q_min) | (q > grid.q_max)):
                bad = int(np.argmax((q < grid.q_min) | (q > grid.q_max)))
                raise NumericalError(
                    f"trajectory {bad} left the grid domain at t={t:.6f} "
                    f"(q={q[bad]:.3f})"
                )
        history.append(TrajectoryEnsemble(t=snapshot_times[j + 1], q=q.copy(), p=p.copy()))
    return history


def ensemble_actions(
    ens: TrajectoryEnsemble,
    spec: PotentialSpec,
    params: PhysicalParams,
    grid: Grid1D,
    *,
    dense: int = 200,
) -> np.ndarray:
    """Action of the instantaneous level set through each point.

    Evaluated through an I(E) interpolant over the ensemble's energy range;
    points whose level set is not a single well get NaN.
    """
    from .wkb import action_integral

    energies = ens.energies(spec, params)
    e_lo, e_hi = float(energies.min()), float(energies.max())
    pad = max(1e-9, 1e-6 * (abs(e_hi) + 1.0))
    e_nodes = np.linspace(e_lo - pad, e_hi + pad, dense)
    i_nodes = np.full(dense, np.nan)
    for j, e in enumerate(e_nodes):
        try:
            i_nodes[j] = action_integral(spec, params, grid, ens.t, e)
        except NumericalError:
            pass
    good = np.isfinite(i_nodes)
    if not np.any(good):
        raise NumericalError(
            f"no single-well level set in the ensemble energy range at t={ens.t}"
        )
    out = np.interp(energies, e_nodes[good], i_nodes[good])
    lowest_good = e_nodes[good][0]
    out[energies < lowest_good - pad] = np.nan
    if np.any(~good):
        # mark points whose own energy fell in an invalid stretch
        bad_nodes = e_nodes[~good]
        for e_bad in bad_nodes:
            out[np.abs(energies - e_bad) < (e_nodes[1] - e_nodes[0])] = np.nan
    return out


def extract_final_angles(
    ens: TrajectoryEnsemble,
    shell: EnergyShell,
    *,
    n_bins: int = 64,
) -> tuple[AngleDistribution, dict]:
    """Angle histogram of the ensemble against a reference shell.

    Points are clamped onto the shell in q (keeping the sign of p); the
    per-point off-shell residual is reported, and residuals above 5% of the
    shell energy abort (the distribution would be meaningless).
    """
    if abs(ens.t - shell.t) > 1e-9:
        raise ValueError("ensemble and shell are at different times")
    energies = ens.energies(shell.spec, shell.params)
    residual = np.abs(energies - shell.energy) / abs(shell.energy)
    worst = float(residual.max())
    if worst > _OFF_SHELL_LIMIT:
        raise NumericalError(
            f"ensemble is off-shell by {worst:.2%} (> {_OFF_SHELL_LIMIT:.0%}); "
            "angle distribution is meaningless"
        )
    tables = angle_tables(shell)
    q_clamped = np.clip(ens.q, shell.q_left, shell.q_right)
    theta = tables.theta_from_point(q_clamped, ens.p)
    counts, edges = np.histogram(theta, bins=n_bins, range=(0.0, 2.0 * np.pi))
    density = counts / ens.size / (2.0 * np.pi / n_bins)
    dist = AngleDistribution(edges=edges, density=density, n_samples=ens.size)
    diag = {"max_offshell_residual": worst, "mean_offshell_residual": float(residual.mean())}
    return dist, diag


def ensemble_angles(ens: TrajectoryEnsemble, shell: EnergyShell) -> np.ndarray:
    """Per-point angles (clamped onto the shell), without histogramming."""
    tables = angle_tables(shell)
    q_clamped = np.clip(ens.q, shell.q_left, shell.q_right)
    return tables.theta_from_point(q_clamped, ens.p)


def distribution_from_function(eta, n_bins: int = 64) -> AngleDistribution:
    """Bin a smooth density eta(theta) on [0, 2 pi) (renormalized)."""
    edges = np.linspace(0.0, 2.0 * np.pi, n_bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    vals = np.asarray([eta(c) for c in centers], dtype=float)
    if np.any(vals < 0):
        raise ValueError("density function must be nonnegative")
    width = 2.0 * np.pi / n_bins
    vals = vals / np.sum(vals * width)
    return AngleDistribution(edges=edges, density=vals, n_samples=0)
