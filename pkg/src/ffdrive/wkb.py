"""Semiclassical quantities on the adiabatic energy shell.

For a level set H0(q, p, t) = E of a confining 1-D Hamiltonian this module
computes turning points, the on-shell momentum pbar = sqrt(2m(E - U0)),
the phase integral Sigma(q) = int_{qL}^{q} pbar dq', the action
I = (1/pi) int pbar dq, the oscillation period, angle coordinates, the
quantized shell energy with I(E) = hbar (n + 1/2), and the time derivative
of Sigma at fixed action.

All endpoint-singular integrals use the substitution

    q = qL + (qR - qL) sin^2(u),   u in [0, pi/2],

which removes the inverse-square-root singularity of 1/pbar analytically;
the transformed integrands are smooth and Gauss-Legendre converges
spectrally (the harmonic-oscillator period is exact to machine precision).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import NumericalError
from .grids import Grid1D
from .model import PhysicalParams, PotentialSpec

QUAD_NODES = 96  # Gauss-Legendre order for shell quadratures
TABLE_INTERVALS = 4000  # resolution of angle <-> position tables


@lru_cache(maxsize=8)
def _gauss01(order: int):
    """Gauss-Legendre nodes/weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def find_turning_points(
    spec: PotentialSpec, params: PhysicalParams, grid: Grid1D, t: float, energy: float
) -> tuple[float, float]:
    """Outermost pair of roots of U0(q, t) = energy, refined by root finding.

    Raises if the energy is below the potential minimum or the level set is
    not a single closed curve (more than two crossings: multi-well regime).
    """
    u_vals = np.asarray(spec.value(grid.points, t, params), dtype=float)
    f = energy - u_vals
    if np.all(f <= 0.0):
        raise NumericalError(
            f"energy {energy} is at or below the potential minimum "
            f"{u_vals.min()} at t={t}: no classically allowed region"
        )
    s = np.where(f > 0.0, 1.0, -1.0)
    cells = np.nonzero(s[1:] * s[:-1] < 0)[0]
    if len(cells) > 2:
        raise NumericalError(
            f"level set U0 = {energy} at t={t} has {len(cells)} crossings: "
            "multi-well regime is not supported"
        )
    if len(cells) < 2:
        raise NumericalError(
            f"level set U0 = {energy} at t={t} is not enclosed on the grid "
            f"({len(cells)} crossings found); widen the grid or raise the energy"
        )

    def g(x: float) -> float:
        return energy - float(spec.value(x, t, params))

    qs = grid.points
    q_left = brentq(g, qs[cells[0]], qs[cells[0] + 1], xtol=1e-13, rtol=1e-15)
    q_right = brentq(g, qs[cells[1]], qs[cells[1] + 1], xtol=1e-13, rtol=1e-15)
    return float(q_left), float(q_right)


def _momentum(spec, params, t, energy, q):
    ksq = 2.0 * params.mass * (energy - np.asarray(spec.value(q, t, params), dtype=float))
    return np.sqrt(np.maximum(ksq, 0.0))


def _shell_quadrature(
    spec, params, t: float, energy: float, q_left: float, q_right: float,
    order: int = QUAD_NODES,
) -> tuple[float, float]:
    """(action, period) from one set of momentum evaluations."""
    x01, w01 = _gauss01(order)
    u = x01 * (np.pi / 2.0)
    width = q_right - q_left
    qq = q_left + width * np.sin(u) ** 2
    pbar = _momentum(spec, params, t, energy, qq)
    if np.any(pbar <= 0.0):
        raise NumericalError(
            f"momentum vanished inside the allowed region at t={t}, E={energy}; "
            "the shell is not a single well at this energy"
        )
    jac = width * np.sin(2.0 * u)
    action = 0.5 * float(np.sum(w01 * pbar * jac))  # (1/pi)*(pi/2)*sum
    period = np.pi * params.mass * float(np.sum(w01 * jac / pbar))
    return action, period


@dataclass(frozen=True)
class EnergyShell:
    """Classical level-set data of H0 at one instant."""

    spec: PotentialSpec
    params: PhysicalParams
    t: float
    energy: float
    action: float
    q_left: float
    q_right: float
    period: float

    @property
    def omega(self) -> float:
        return 2.0 * np.pi / self.period

    def momentum(self, q) -> np.ndarray:
        """pbar(q) = sqrt(2m(E - U0)); zero outside the allowed region."""
        return _momentum(self.spec, self.params, self.t, self.energy, q)


def shell_from_energy(
    spec: PotentialSpec, params: PhysicalParams, grid: Grid1D, t: float, energy: float
) -> EnergyShell:
    q_left, q_right = find_turning_points(spec, params, grid, t, energy)
    action, period = _shell_quadrature(spec, params, t, energy, q_left, q_right)
    return EnergyShell(
        spec=spec, params=params, t=t, energy=energy, action=action,
        q_left=q_left, q_right=q_right, period=period,
    )


def action_integral(
    spec: PotentialSpec, params: PhysicalParams, grid: Grid1D, t: float, energy: float
) -> float:
    """I(E) = (1/pi) int_{qL}^{qR} pbar dq."""
    q_left, q_right = find_turning_points(spec, params, grid, t, energy)
    action, _ = _shell_quadrature(spec, params, t, energy, q_left, q_right)
    return action


def _barrier_energy(spec, params, grid, t) -> float | None:
    """Highest interior local maximum of the sampled potential, if any."""
    u_vals = np.asarray(spec.value(grid.points, t, params), dtype=float)
    interior = (u_vals[1:-1] > u_vals[:-2]) & (u_vals[1:-1] > u_vals[2:])
    if not np.any(interior):
        return None
    return float(u_vals[1:-1][interior].max())


def wkb_energy(
    spec: PotentialSpec,
    params: PhysicalParams,
    grid: Grid1D,
    t: float,
    n: int,
    e_hint: float | None = None,
) -> float:
    """Shell energy with quantized action I(E) = hbar (n + 1/2).

    With an energy hint (e.g. the value at a nearby time) a Newton
    iteration using dI/dE = T / 2 pi converges in two or three steps;
    otherwise a bracketing search above any interior barrier is used.
    """
    if n < 0:
        raise ValueError("quantum number must be nonnegative")
    target = params.hbar * (n + 0.5)

    if e_hint is not None:
        try:
            energy = float(e_hint)
            for _ in range(4):
                q_l, q_r = find_turning_points(spec, params, grid, t, energy)
                action, period = _shell_quadrature(spec, params, t, energy, q_l, q_r)
                step = (target - action) * 2.0 * np.pi / period
                energy += step
                if abs(step) < 1e-13 * max(1.0, abs(energy)):
                    break
            q_l, q_r = find_turning_points(spec, params, grid, t, energy)
            action, _ = _shell_quadrature(spec, params, t, energy, q_l, q_r)
            if abs(action - target) <= 1e-10 * max(1.0, target):
                return energy
        except NumericalError:
            pass  # fall through to the bracketing search

    u_vals = np.asarray(spec.value(grid.points, t, params), dtype=float)
    scale = max(1.0, float(np.ptp(u_vals)))
    barrier = _barrier_energy(spec, params, grid, t)
    lo = (barrier if barrier is not None else float(u_vals.min())) + 1e-9 * scale

    def act(energy: float) -> float:
        q_l, q_r = find_turning_points(spec, params, grid, t, energy)
        action, _ = _shell_quadrature(spec, params, t, energy, q_l, q_r)
        return action

    act_lo = None
    for _ in range(60):
        try:
            act_lo = act(lo)
            break
        except NumericalError:
            lo += 1e-3 * scale
    if act_lo is None:
        raise NumericalError(
            f"could not bracket the quantized shell at t={t}: no single-well "
            "energy window found above the barrier"
        )
    if act_lo > target:
        raise NumericalError(
            f"target action {target} lies below the single-well regime at t={t} "
            f"(action at the barrier is already {act_lo})"
        )
    step = max(1.0, abs(lo))
    hi = lo + step
    for _ in range(60):
        if act(hi) >= target:
            break
        step *= 2.0
        hi = lo + step
    else:
        raise NumericalError(f"failed to bracket I(E) = {target} from above at t={t}")
    return float(brentq(lambda e: act(e) - target, lo, hi, xtol=1e-12, rtol=1e-15))


def shell_for_level(
    spec: PotentialSpec,
    params: PhysicalParams,
    grid: Grid1D,
    t: float,
    n: int,
    e_hint: float | None = None,
) -> EnergyShell:
    energy = wkb_energy(spec, params, grid, t, n, e_hint=e_hint)
    return shell_from_energy(spec, params, grid, t, energy)


# --- phase integral ---------------------------------------------------------


def sigma_at(shell: EnergyShell, q) -> np.ndarray:
    """Sigma(q) = int_{qL}^{q} pbar dq' for arbitrary points.

    Constant (0 resp. pi*I) beyond the turning points.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    width = shell.q_right - shell.q_left
    ratio = np.clip((q - shell.q_left) / width, 0.0, 1.0)
    u_q = np.arcsin(np.sqrt(ratio))
    x01, w01 = _gauss01(QUAD_NODES)
    umat = u_q[:, None] * x01[None, :]
    qmat = shell.q_left + width * np.sin(umat) ** 2
    pmat = _momentum(shell.spec, shell.params, shell.t, shell.energy, qmat)
    vals = u_q * np.sum(w01 * pmat * width * np.sin(2.0 * umat), axis=1)
    vals[q <= shell.q_left] = 0.0
    vals[q >= shell.q_right] = np.pi * shell.action
    return vals


def sigma(shell: EnergyShell, grid: Grid1D) -> np.ndarray:
    """Sigma sampled on the grid."""
    return sigma_at(shell, grid.points)


class SigmaDifferencer:
    """Finite-difference stencil for d Sigma/dt at fixed action.

    Holds the requantized shells at the stencil times so the derivative can
    be evaluated both on the grid and at arbitrary points (the flow-field
    construction needs off-grid anchor values near the turning points).
    """

    def __init__(
        self,
        spec: PotentialSpec,
        params: PhysicalParams,
        grid: Grid1D,
        n: int,
        t: float,
        dt_frac: float = 1e-5,
        e_hint: float | None = None,
    ):
        dt_fd = dt_frac * params.tau
        e_mid = wkb_energy(spec, params, grid, t, n, e_hint=e_hint)
        if t < dt_fd:
            stencil = "forward"
            t_a, t_b, denom = t, t + dt_fd, dt_fd
        elif params.tau - t < dt_fd:
            stencil = "backward"
            t_a, t_b, denom = t - dt_fd, t, dt_fd
        else:
            stencil = "centered"
            t_a, t_b, denom = t - dt_fd, t + dt_fd, 2.0 * dt_fd
        self.shell_a = shell_for_level(spec, params, grid, t_a, n, e_hint=e_mid)
        self.shell_b = shell_for_level(spec, params, grid, t_b, n, e_hint=e_mid)
        self.denom = denom
        self.stencil = stencil
        self.dt_fd = dt_fd
        self.energy = e_mid
        self.shell = shell_from_energy(spec, params, grid, t, e_mid)

    def at(self, q) -> np.ndarray:
        return (sigma_at(self.shell_b, q) - sigma_at(self.shell_a, q)) / self.denom

    def on_grid(self, grid: Grid1D) -> np.ndarray:
        return self.at(grid.points)

    @property
    def meta(self) -> dict:
        return {"stencil": self.stencil, "dt_fd": self.dt_fd, "energy": self.energy}


def sigma_time_derivative(
    spec: PotentialSpec,
    params: PhysicalParams,
    grid: Grid1D,
    n: int,
    t: float,
    dt_frac: float = 1e-5,
    e_hint: float | None = None,
) -> tuple[np.ndarray, dict]:
    """d Sigma / dt at fixed q and fixed action, by finite differences.

    The shells at the stencil times are requantized so the action stays at
    hbar (n + 1/2).  Near the protocol edges a one-sided stencil is used
    and flagged in the returned metadata.
    """
    diff = SigmaDifferencer(spec, params, grid, n, t, dt_frac=dt_frac, e_hint=e_hint)
    return diff.on_grid(grid), diff.meta


def energy_rate(shell: EnergyShell) -> float:
    """dE/dt at fixed action: the orbit average of dU0/dt."""
    x01, w01 = _gauss01(QUAD_NODES)
    u = x01 * (np.pi / 2.0)
    width = shell.q_right - shell.q_left
    qq = shell.q_left + width * np.sin(u) ** 2
    pbar = _momentum(shell.spec, shell.params, shell.t, shell.energy, qq)
    dudt = np.asarray(shell.spec.value_dt(qq, shell.t, shell.params), dtype=float)
    jac = width * np.sin(2.0 * u)
    integral = (np.pi / 2.0) * float(np.sum(w01 * shell.params.mass * dudt / pbar * jac))
    return 2.0 * integral / shell.period


def sigma_time_derivative_analytic(
    spec: PotentialSpec, params: PhysicalParams, grid: Grid1D, n: int, t: float,
    e_hint: float | None = None,
) -> np.ndarray:
    """Closed-form d Sigma/dt = int_{qL}^{q} m (dE/dt - dU0/dt)/pbar dq'.

    Kept as an independent cross-check of the finite-difference route.
    """
    shell = shell_for_level(spec, params, grid, t, n, e_hint=e_hint)
    e_dot = energy_rate(shell)
    q = grid.points
    width = shell.q_right - shell.q_left
    ratio = np.clip((q - shell.q_left) / width, 0.0, 1.0)
    u_q = np.arcsin(np.sqrt(ratio))
    x01, w01 = _gauss01(QUAD_NODES)
    umat = u_q[:, None] * x01[None, :]
    qmat = shell.q_left + width * np.sin(umat) ** 2
    pmat = _momentum(shell.spec, shell.params, shell.t, shell.energy, qmat)
    dudt = np.asarray(spec.value_dt(qmat, t, params), dtype=float)
    integrand = params.mass * (e_dot - dudt) / np.maximum(pmat, 1e-300)
    jac = width * np.sin(2.0 * umat)
    return u_q * np.sum(w01 * integrand * jac, axis=1)


# --- angle coordinate -------------------------------------------------------


@dataclass(frozen=True)
class AngleTables:
    """Dense tables of the angle variable along the upper branch.

    theta(q) = omega * t_q with t_q the traversal time from the left
    turning point; theta in [0, pi] on the upper branch (p >= 0) and
    2 pi - theta on the lower branch.
    """

    shell: EnergyShell
    u_grid: np.ndarray
    theta_of_u: np.ndarray
    period: float

    @property
    def omega(self) -> float:
        return 2.0 * np.pi / self.period

    def _u_from_q(self, q) -> np.ndarray:
        width = self.shell.q_right - self.shell.q_left
        ratio = np.clip((np.asarray(q, dtype=float) - self.shell.q_left) / width, 0.0, 1.0)
        return np.arcsin(np.sqrt(ratio))

    def theta_from_point(self, q, p) -> np.ndarray:
        """Angle of phase-space points near the shell (q clamped on-shell)."""
        theta_up = np.interp(self._u_from_q(q), self.u_grid, self.theta_of_u)
        p = np.asarray(p, dtype=float)
        return np.where(p >= 0.0, theta_up, 2.0 * np.pi - theta_up)

    def point_from_theta(self, theta) -> tuple[np.ndarray, np.ndarray]:
        """On-shell phase-space point at given angle(s)."""
        theta = np.mod(np.asarray(theta, dtype=float), 2.0 * np.pi)
        upper = theta <= np.pi
        theta_up = np.where(upper, theta, 2.0 * np.pi - theta)
        u = np.interp(theta_up, self.theta_of_u, self.u_grid)
        width = self.shell.q_right - self.shell.q_left
        q = self.shell.q_left + width * np.sin(u) ** 2
        pbar = self.shell.momentum(q)
        return q, np.where(upper, pbar, -pbar)


def angle_tables(shell: EnergyShell, n_intervals: int = TABLE_INTERVALS) -> AngleTables:
    """Cumulative traversal-time table over the substitution variable u."""
    u_edges = np.linspace(0.0, np.pi / 2.0, n_intervals + 1)
    xg, wg = _gauss01(16)
    mid = u_edges[:-1, None] + np.diff(u_edges)[:, None] * xg[None, :]
    width = shell.q_right - shell.q_left
    qn = shell.q_left + width * np.sin(mid) ** 2
    pn = _momentum(shell.spec, shell.params, shell.t, shell.energy, qn)
    integrand = shell.params.mass * width * np.sin(2.0 * mid) / pn
    segments = np.diff(u_edges) * np.sum(wg * integrand, axis=1)
    t_of_u = np.concatenate([[0.0], np.cumsum(segments)])
    period = 2.0 * t_of_u[-1]
    theta_of_u = (2.0 * np.pi / period) * t_of_u
    theta_of_u[-1] = np.pi  # exact by definition of the half period
    return AngleTables(shell=shell, u_grid=u_edges, theta_of_u=theta_of_u, period=period)


def period_and_angle(shell: EnergyShell, grid: Grid1D) -> tuple[float, np.ndarray]:
    """Oscillation period and theta(q) on the upper branch, sampled on grid.

    theta is clamped to 0 left of qL and pi right of qR.
    """
    tables = angle_tables(shell)
    theta = np.interp(tables._u_from_q(grid.points), tables.u_grid, tables.theta_of_u)
    theta[grid.points <= shell.q_left] = 0.0
    theta[grid.points >= shell.q_right] = np.pi
    return tables.period, theta


# --- WKB state --------------------------------------------------------------


@dataclass(frozen=True)
class WkbState:
    """Shell plus the sampled phase Sigma and classical density rho."""

    shell: EnergyShell
    n: int
    sigma: np.ndarray
    rho: np.ndarray


def wkb_state(
    spec: PotentialSpec, params: PhysicalParams, grid: Grid1D, t: float, n: int,
    e_hint: float | None = None,
) -> WkbState:
    shell = shell_for_level(spec, params, grid, t, n, e_hint=e_hint)
    sig = sigma(shell, grid)
    pbar = shell.momentum(grid.points)
    rho = np.zeros(grid.n)
    inside = (grid.points > shell.q_left) & (grid.points < shell.q_right) & (pbar > 0)
    # normalized so the continuum integral over the well is exactly one
    rho[inside] = 2.0 * params.mass / (shell.period * pbar[inside])
    return WkbState(shell=shell, n=n, sigma=sig, rho=rho)


def predicted_nodes(wkb: WkbState) -> np.ndarray:
    """Positions where Sigma(q) = (nu - 1/4) pi hbar, nu = 1..n.

    These are the semiclassical node positions of the n-th eigenstate.
    """
    n = wkb.n
    if n < 1:
        raise ValueError("node prediction needs n >= 1")
    hbar = wkb.shell.params.hbar
    targets = (np.arange(1, n + 1) - 0.25) * np.pi * hbar
    sigma_max = np.pi * wkb.shell.action
    if targets[-1] >= sigma_max:
        raise NumericalError(
            f"only {int(np.sum(targets < sigma_max))} of {n} node equations have "
            "solutions inside the well: inconsistent semiclassical state"
        )
    shell = wkb.shell
    roots = np.empty(n)
    for i, target in enumerate(targets):
        roots[i] = brentq(
            lambda x: float(sigma_at(shell, x)[0]) - target,
            shell.q_left,
            shell.q_right,
            xtol=1e-12,
        )
    return roots
