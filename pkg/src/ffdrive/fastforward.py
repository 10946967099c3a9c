"""Divergence-free velocity field, acceleration field, and driving potential.

The velocity field transports the semiclassical phase:

    v(q, t) = - (d Sigma/dt) / (d Sigma/dq) = - (d Sigma/dt) / pbar,

so by construction dSigma/dt + v dSigma/dq = 0 on the classically allowed
region.  The ratio is 0/0 at the turning points; the field is therefore
evaluated a few cells inside and continued outward by a linear (or, for
sensitivity checks, constant) extrapolation.  The driving potential follows
from the acceleration field:

    a = v dv/dq + dv/dt,     dU/dq = -m a,

with the additive constant fixed by a gauge rule (zero at the instantaneous
minimum of the bare potential, or mean-zero across the well).  All three
fields vanish identically outside the protocol window.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline

from .errors import NumericalError
from .grids import Grid1D
from .model import PhysicalParams, PotentialSpec, evaluate_potential
from . import wkb

GAUGE_MIN_ZERO = "min_zero"
GAUGE_MEAN_ZERO = "mean_zero"
EXTENSION_LINEAR = "linear"
EXTENSION_CONSTANT = "constant"

DEFAULT_MESH_TIMES = 2001
DEFAULT_EPS_CELLS = 3


@dataclass(frozen=True)
class VelocityField:
    """v(., t) on the grid plus the shell data used to build it."""

    grid: Grid1D
    t: float
    values: np.ndarray
    energy: float
    q_left: float
    q_right: float
    extension: str
    stencil: str


def velocity_field(
    spec: PotentialSpec,
    params: PhysicalParams,
    grid: Grid1D,
    n: int,
    t: float,
    *,
    extension: str = EXTENSION_LINEAR,
    eps_cells: int = DEFAULT_EPS_CELLS,
    dt_frac: float = 1e-5,
    e_hint: float | None = None,
) -> VelocityField:
    """The phase-transporting velocity field at one time.

    Evaluated as -dSigma/dt / pbar on (qL + eps, qR - eps) with
    eps = eps_cells * dq, then extrapolated across the turning points from
    anchors at exactly qL + eps and qR - eps.  Anchoring at those
    continuously moving positions (rather than at grid indices) keeps the
    rows smooth in t, which the acceleration stencil relies on.
    Zero outside the protocol window.
    """
    if t < 0.0 or t > params.tau:
        return VelocityField(
            grid=grid, t=t, values=np.zeros(grid.n), energy=np.nan,
            q_left=np.nan, q_right=np.nan, extension=extension, stencil="outside",
        )
    if extension not in (EXTENSION_LINEAR, EXTENSION_CONSTANT):
        raise ValueError(f"unknown extension {extension!r}")
    diff = wkb.SigmaDifferencer(spec, params, grid, n, t, dt_frac=dt_frac, e_hint=e_hint)
    shell = diff.shell
    eps = eps_cells * grid.dq
    anchor_l = shell.q_left + eps
    anchor_r = shell.q_right - eps
    if anchor_r - anchor_l < 4.0 * grid.dq:
        raise NumericalError(
            f"allowed region at t={t} spans fewer than four interior grid cells; "
            "refine the grid"
        )

    def ratio(q: np.ndarray) -> np.ndarray:
        return -diff.at(q) / shell.momentum(q)

    q = grid.points
    mask = (q >= anchor_l) & (q <= anchor_r)
    v = np.zeros(grid.n)
    v[mask] = ratio(q[mask])
    # one-sided second-order slopes at the moving anchors
    h = grid.dq
    vl = ratio(np.array([anchor_l, anchor_l + h, anchor_l + 2.0 * h]))
    vr = ratio(np.array([anchor_r, anchor_r - h, anchor_r - 2.0 * h]))
    if extension == EXTENSION_LINEAR:
        slope_l = (-3.0 * vl[0] + 4.0 * vl[1] - vl[2]) / (2.0 * h)
        slope_r = (3.0 * vr[0] - 4.0 * vr[1] + vr[2]) / (2.0 * h)
    else:
        slope_l = slope_r = 0.0
    left = q < anchor_l
    right = q > anchor_r
    v[left] = vl[0] + slope_l * (q[left] - anchor_l)
    v[right] = vr[0] + slope_r * (q[right] - anchor_r)
    if not np.all(np.isfinite(v)):
        raise NumericalError(f"velocity field is not finite at t={t}")
    return VelocityField(
        grid=grid, t=t, values=v, energy=shell.energy,
        q_left=shell.q_left, q_right=shell.q_right,
        extension=extension, stencil=diff.stencil,
    )


def acceleration_field(
    v_prev: np.ndarray | None,
    v_now: np.ndarray,
    v_next: np.ndarray | None,
    grid: Grid1D,
    dt: float,
) -> np.ndarray:
    """a = v dv/dq + dv/dt on a three-point time stencil.

    Missing neighbors at the protocol edges fall back to one-sided
    differences in t.
    """
    dvdq = np.gradient(v_now, grid.dq)
    if v_prev is None and v_next is None:
        raise ValueError("need at least one time neighbor for dv/dt")
    if v_prev is None:
        dvdt = (v_next - v_now) / dt
    elif v_next is None:
        dvdt = (v_now - v_prev) / dt
    else:
        dvdt = (v_next - v_prev) / (2.0 * dt)
    return v_now * dvdq + dvdt


def fast_forward_potential(
    a: np.ndarray,
    grid: Grid1D,
    params: PhysicalParams,
    *,
    gauge: str = GAUGE_MIN_ZERO,
    q_ref_index: int | None = None,
    window: tuple[float, float] | None = None,
) -> np.ndarray:
    """U(q) = -m int a dq' with the gauge constant fixed by rule.

    min_zero: U vanishes at the reference index (instantaneous minimum of
    the bare potential).  mean_zero: U has zero mean over the given window.
    """
    if not np.all(np.isfinite(a)):
        raise NumericalError("acceleration field is not finite")
    u = -params.mass * cumulative_trapezoid(a, grid.points, initial=0.0)
    if gauge == GAUGE_MIN_ZERO:
        if q_ref_index is None:
            raise ValueError("min_zero gauge needs the reference index")
        return u - u[q_ref_index]
    if gauge == GAUGE_MEAN_ZERO:
        if window is None:
            raise ValueError("mean_zero gauge needs the (q_left, q_right) window")
        sel = (grid.points >= window[0]) & (grid.points <= window[1])
        return u - u[sel].mean()
    raise ValueError(f"unknown gauge {gauge!r}")


class _CubicRowInterpolator:
    """Cubic splines of each mesh row, blended linearly between rows.

    Spline construction is linear in the data, so blending stored
    polynomial coefficients of adjacent rows is exactly the cubic spline
    of the time-interpolated row.
    """

    def __init__(self, grid: Grid1D, t_mesh: np.ndarray, rows: np.ndarray):
        self._grid = grid
        self._t = t_mesh
        self._coefs = np.stack([CubicSpline(grid.points, row).c for row in rows])

    def ev(self, q: np.ndarray, t: float) -> np.ndarray:
        t_mesh = self._t
        if t <= t_mesh[0] or t >= t_mesh[-1]:
            return np.zeros_like(q)
        x = (t - t_mesh[0]) / (t_mesh[1] - t_mesh[0])
        j = min(int(x), len(t_mesh) - 2)
        w1 = x - j
        pts = self._grid.points
        idx = np.clip(((q - pts[0]) / self._grid.dq).astype(np.int64), 0, self._grid.n - 2)
        dx = q - pts[idx]
        c = (1.0 - w1) * self._coefs[j][:, idx] + w1 * self._coefs[j + 1][:, idx]
        return ((c[0] * dx + c[1]) * dx + c[2]) * dx + c[3]


@dataclass(frozen=True)
class FlowFields:
    """v, a and the driving potential assembled on a (t, q) mesh.

    Consumers interpolate linearly in t between mesh rows; everything is
    identically zero outside [0, tau].
    """

    grid: Grid1D
    params: PhysicalParams
    n: int
    t_mesh: np.ndarray
    v: np.ndarray  # (M, n)
    a: np.ndarray
    u_ff: np.ndarray
    energies: np.ndarray  # (M,) shell energy at fixed action
    q_left: np.ndarray
    q_right: np.ndarray
    extension: str
    gauge: str
    eps_cells: int
    _accel_interp: object = dc_field(init=False, repr=False, compare=False, default=None)

    def _blend(self, table: np.ndarray, t: float) -> np.ndarray:
        mesh = self.t_mesh
        if t < mesh[0] or t > mesh[-1]:
            return np.zeros(self.grid.n)
        x = (t - mesh[0]) / (mesh[1] - mesh[0])
        j = min(int(x), len(mesh) - 2)
        w1 = x - j
        return (1.0 - w1) * table[j] + w1 * table[j + 1]

    def velocity_at(self, t: float) -> np.ndarray:
        return self._blend(self.v, t)

    def acceleration_at(self, t: float) -> np.ndarray:
        return self._blend(self.a, t)

    def potential_at(self, t: float) -> np.ndarray:
        return self._blend(self.u_ff, t)

    def acceleration_ev(self, q: np.ndarray, t: float) -> np.ndarray:
        """Cubic-in-q, linear-in-t acceleration at arbitrary positions."""
        interp = self._accel_interp
        if interp is None:
            interp = _CubicRowInterpolator(self.grid, self.t_mesh, self.a)
            object.__setattr__(self, "_accel_interp", interp)
        return interp.ev(q, t)

    def max_drive(self) -> float:
        return float(np.abs(self.u_ff).max())


def build_flow_fields(
    spec: PotentialSpec,
    params: PhysicalParams,
    grid: Grid1D,
    n: int,
    *,
    mesh_times: int = DEFAULT_MESH_TIMES,
    extension: str = EXTENSION_LINEAR,
    gauge: str = GAUGE_MIN_ZERO,
    eps_cells: int = DEFAULT_EPS_CELLS,
    dt_frac: float = 1e-5,
) -> FlowFields:
    """Assemble v, a and the driving potential over the protocol window."""
    if mesh_times < 9:
        raise ValueError("mesh_times must be at least 9")
    t_mesh = np.linspace(0.0, params.tau, mesh_times)
    dt = t_mesh[1] - t_mesh[0]
    v_rows = np.empty((mesh_times, grid.n))
    energies = np.empty(mesh_times)
    q_lefts = np.empty(mesh_times)
    q_rights = np.empty(mesh_times)
    hint = None
    for j, t in enumerate(t_mesh):
        vf = velocity_field(
            spec, params, grid, n, t,
            extension=extension, eps_cells=eps_cells, dt_frac=dt_frac, e_hint=hint,
        )
        v_rows[j] = vf.values
        energies[j] = vf.energy
        q_lefts[j] = vf.q_left
        q_rights[j] = vf.q_right
        hint = vf.energy
    dvdq = np.gradient(v_rows, grid.dq, axis=1)
    dvdt = np.gradient(v_rows, dt, axis=0)
    a_rows = v_rows * dvdq + dvdt
    u_rows = np.empty_like(a_rows)
    for j, t in enumerate(t_mesh):
        u_bare = evaluate_potential(spec, params, grid, t).values
        u_rows[j] = fast_forward_potential(
            a_rows[j], grid, params,
            gauge=gauge,
            q_ref_index=int(np.argmin(u_bare)),
            window=(q_lefts[j], q_rights[j]),
        )
    if not (np.all(np.isfinite(v_rows)) and np.all(np.isfinite(u_rows))):
        raise NumericalError("flow-field construction produced non-finite values")
    return FlowFields(
        grid=grid, params=params, n=n, t_mesh=t_mesh,
        v=v_rows, a=a_rows, u_ff=u_rows,
        energies=energies, q_left=q_lefts, q_right=q_rights,
        extension=extension, gauge=gauge, eps_cells=eps_cells,
    )


# --- Hamilton-Jacobi phase ---------------------------------------------------


@dataclass(frozen=True)
class PhaseS:
    """Phase S with dS/dq = m v and the Hamilton-Jacobi equation enforced.

    beta(t) is the spatial constant absorbed into S so that
    dS/dt + (dS/dq)^2 / 2m + U_drive = 0; S is constant in q outside the
    protocol window (values s_minus before, s_plus after).
    """

    t_mesh: np.ndarray
    values: np.ndarray  # (M, n)
    beta: np.ndarray  # (M,)
    s_minus: float
    s_plus: float


def hamilton_jacobi_phase(
    flow: FlowFields, spec: PotentialSpec, params: PhysicalParams
) -> PhaseS:
    """Integrate dS/dq = m v and fix the integration constant via beta(t).

    The combination dS0/dt + (m v)^2/2m + U_drive must be independent of q
    (it is the exact q-derivative identity behind the construction); a
    violation beyond tolerance means v and U_drive are inconsistent.
    """
    grid = flow.grid
    dt = flow.t_mesh[1] - flow.t_mesh[0]
    s0 = params.mass * cumulative_trapezoid(flow.v, grid.points, axis=1, initial=0.0)
    ds0_dt = np.gradient(s0, dt, axis=0)
    beta_q = ds0_dt + 0.5 * params.mass * flow.v**2 + flow.u_ff
    spread = float(np.ptp(beta_q, axis=1).max())
    scale = float(np.abs(beta_q).max())
    if scale > 0 and spread > 1e-4 * scale:
        raise NumericalError(
            f"Hamilton-Jacobi constant varies with q (spread {spread:.3e} vs "
            f"scale {scale:.3e}): velocity and driving potential are inconsistent"
        )
    beta = np.empty(len(flow.t_mesh))
    for j, t in enumerate(flow.t_mesh):
        u_bare = evaluate_potential(spec, params, grid, t).values
        beta[j] = beta_q[j, int(np.argmin(u_bare))]
    accum = cumulative_trapezoid(beta, flow.t_mesh, initial=0.0)
    s_vals = s0 - accum[:, None]
    return PhaseS(
        t_mesh=flow.t_mesh,
        values=s_vals,
        beta=beta,
        s_minus=0.0,
        s_plus=float(-accum[-1]),
    )


# --- residual diagnostics ----------------------------------------------------


def _spectral_derivative(values: np.ndarray, grid: Grid1D, order: int = 1) -> np.ndarray:
    k = grid.wavenumbers()
    return np.fft.ifft((1j * k) ** order * np.fft.fft(values))


def ansatz_residual(
    spec: PotentialSpec,
    params: PhysicalParams,
    grid: Grid1D,
    n: int,
    flow: FlowFields,
    phase: PhaseS,
    *,
    sample_times: int = 9,
    dt_fd: float = 1e-4,
    solver=None,
) -> dict:
    """Time-averaged residual norms of the driven evolution.

    'generator': || i hbar dphi/dt - (1/2)(p v + v p) phi || / ||phi||, the
    transport equation the velocity field is asked to satisfy.
    'tdse': the full Schroedinger residual of the phase-dressed eigenstate
    ansatz under H0 + U_drive.
    Both are reported; neither is zero for a generic protocol because the
    density continuity condition is sacrificed by this construction.
    """
    from .spectral import solve_eigenproblem
    from .model import evaluate_potential as eval_pot

    if solver is None:
        def solver(t):
            pot = eval_pot(spec, params, grid, t)
            sol = solve_eigenproblem(pot, params, n + 1)
            return sol.energies[n], sol.states[n]

    tau = params.tau
    times = np.linspace(0.15 * tau, 0.85 * tau, sample_times)
    accum_energy = cumulative_trapezoid(flow.energies, flow.t_mesh, initial=0.0)
    hbar, mass = params.hbar, params.mass

    gen_res = []
    tdse_res = []
    for t in times:
        _, phi_m = solver(t - dt_fd)
        e_n, phi_0 = solver(t)
        _, phi_p = solver(t + dt_fd)
        v_row = flow.velocity_at(t)
        dphi_dt = (phi_p - phi_m) / (2.0 * dt_fd)
        generator = -0.5j * hbar * (
            _spectral_derivative(v_row * phi_0, grid) + v_row * _spectral_derivative(phi_0, grid)
        )
        r1 = 1j * hbar * dphi_dt - generator
        norm_phi = np.sqrt(np.sum(np.abs(phi_0) ** 2) * grid.dq)
        gen_res.append(np.sqrt(np.sum(np.abs(r1) ** 2) * grid.dq) / norm_phi)

        def ansatz(tt, phi):
            s_row = np.interp(tt, flow.t_mesh, np.arange(len(flow.t_mesh)))
            j = min(int(s_row), len(flow.t_mesh) - 2)
            w1 = s_row - j
            s_vals = (1.0 - w1) * phase.values[j] + w1 * phase.values[j + 1]
            e_acc = np.interp(tt, flow.t_mesh, accum_energy)
            return phi * np.exp(1j * s_vals / hbar) * np.exp(-1j * e_acc / hbar)

        psi_m = ansatz(t - dt_fd, phi_m)
        psi_0 = ansatz(t, phi_0)
        psi_p = ansatz(t + dt_fd, phi_p)
        dpsi_dt = (psi_p - psi_m) / (2.0 * dt_fd)
        u_tot = eval_pot(spec, params, grid, t).values + flow.potential_at(t)
        h_psi = (
            -(hbar**2) / (2.0 * mass) * _spectral_derivative(psi_0, grid, order=2)
            + u_tot * psi_0
        )
        r2 = 1j * hbar * dpsi_dt - h_psi
        norm_psi = np.sqrt(np.sum(np.abs(psi_0) ** 2) * grid.dq)
        tdse_res.append(np.sqrt(np.sum(np.abs(r2) ** 2) * grid.dq) / norm_psi)

    return {
        "generator": float(np.mean(gen_res)),
        "tdse": float(np.mean(tdse_res)),
        "times": times,
    }
