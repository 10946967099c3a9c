"""Time-dependent bare potentials, their schedules, and run configuration.

The workhorse is the tilted quartic double well

    U0(q, t) = q^4 - 16 q^2 + lam(t) q,
    lam(t)   = 4 cos(pi t / tau) [5 - cos(2 pi t / tau)],

whose tilt sweeps from +16 to -16 over the protocol.  The schedule is
clamped to its endpoint values outside [0, tau] so that propagators may
overrun the protocol window slightly.  Harmonic, scale-invariant
(translated/dilated) and tabulated potentials are provided for testing
and for user-supplied protocols.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import ConfigError, NumericalError
from .grids import Field, Grid1D


@dataclass(frozen=True)
class PhysicalParams:
    mass: float = 1.0
    hbar: float = 2.0
    tau: float = 1.0
    n: int = 17

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.hbar <= 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.n < 0 or self.n != int(self.n):
            raise ValueError(f"quantum number must be a nonnegative integer, got {self.n}")


def tilt_schedule(t, tau: float):
    """lam(t) = 4 cos(pi t/tau)[5 - cos(2 pi t/tau)], clamped outside [0, tau]."""
    tc = np.clip(t, 0.0, tau)
    return 4.0 * np.cos(np.pi * tc / tau) * (5.0 - np.cos(2.0 * np.pi * tc / tau))


def tilt_schedule_rate(t, tau: float):
    """d lam / dt; identically zero outside the protocol window."""
    t = np.asarray(t, dtype=float)
    x = np.pi * t / tau
    rate = (4.0 * np.pi / tau) * (
        -np.sin(x) * (5.0 - np.cos(2.0 * x)) + 2.0 * np.cos(x) * np.sin(2.0 * x)
    )
    return np.where((t < 0.0) | (t > tau), 0.0, rate)


@dataclass(frozen=True)
class QuarticTilt:
    """q^4 - 16 q^2 + lam(t) q with the clamped cosine tilt schedule."""

    name = "quartic"

    def value(self, q, t: float, p: PhysicalParams):
        q = np.asarray(q, dtype=float)
        qq = q * q
        return qq * qq - 16.0 * qq + tilt_schedule(t, p.tau) * q

    def value_dt(self, q, t: float, p: PhysicalParams):
        q = np.asarray(q, dtype=float)
        return tilt_schedule_rate(t, p.tau) * q

    def value_dq(self, q, t: float, p: PhysicalParams):
        q = np.asarray(q, dtype=float)
        return (4.0 * q * q - 32.0) * q + tilt_schedule(t, p.tau)


@dataclass(frozen=True)
class Harmonic:
    """Static harmonic well, (1/2) m omega^2 q^2."""

    omega: float = 1.0

    name = "harmonic"

    def value(self, q, t: float, p: PhysicalParams):
        q = np.asarray(q, dtype=float)
        return 0.5 * p.mass * self.omega**2 * q**2

    def value_dt(self, q, t: float, p: PhysicalParams):
        return np.zeros_like(np.asarray(q, dtype=float))

    def value_dq(self, q, t: float, p: PhysicalParams):
        q = np.asarray(q, dtype=float)
        return p.mass * self.omega**2 * q


@dataclass(frozen=True)
class ScaleInvariant:
    """U(q,t) = gamma^-2 * base((q - f)/gamma): rigid translation f(t) plus
    dilation gamma(t).

    The translation/dilation schedules and their first two derivatives are
    user-supplied callables of t; they are evaluated with t clamped into
    [0, tau] and the rates forced to zero outside the open protocol window.
    The closed-form velocity and driving potential for this family serve as
    an exact oracle for the generic construction.
    """

    base: Callable[[np.ndarray], np.ndarray]
    base_dq: Callable[[np.ndarray], np.ndarray]
    f: Callable[[float], float] = lambda t: 0.0
    f_dot: Callable[[float], float] = lambda t: 0.0
    f_ddot: Callable[[float], float] = lambda t: 0.0
    gamma: Callable[[float], float] = lambda t: 1.0
    gamma_dot: Callable[[float], float] = lambda t: 0.0
    gamma_ddot: Callable[[float], float] = lambda t: 0.0

    name = "scale_invariant"

    def _sched(self, t: float, p: PhysicalParams):
        tc = float(np.clip(t, 0.0, p.tau))
        rate_on = 1.0 if 0.0 <= t <= p.tau else 0.0
        return (
            self.f(tc),
            self.f_dot(tc) * rate_on,
            self.f_ddot(tc) * rate_on,
            self.gamma(tc),
            self.gamma_dot(tc) * rate_on,
            self.gamma_ddot(tc) * rate_on,
        )

    def value(self, q, t: float, p: PhysicalParams):
        q = np.asarray(q, dtype=float)
        fv, _, _, gv, _, _ = self._sched(t, p)
        return self.base((q - fv) / gv) / gv**2

    def value_dt(self, q, t: float, p: PhysicalParams):
        q = np.asarray(q, dtype=float)
        fv, fd, _, gv, gd, _ = self._sched(t, p)
        x = (q - fv) / gv
        xdot = -(fd + gd * x) / gv
        return -2.0 * gd / gv**3 * self.base(x) + self.base_dq(x) * xdot / gv**2

    def value_dq(self, q, t: float, p: PhysicalParams):
        q = np.asarray(q, dtype=float)
        fv, _, _, gv, _, _ = self._sched(t, p)
        return self.base_dq((q - fv) / gv) / gv**3

    def closed_velocity(self, q, t: float, p: PhysicalParams):
        """v = f' + (gamma'/gamma) (q - f); exact for this family."""
        q = np.asarray(q, dtype=float)
        fv, fd, _, gv, gd, _ = self._sched(t, p)
        return fd + (gd / gv) * (q - fv)

    def closed_drive(self, q, t: float, p: PhysicalParams):
        """Exact driving potential -m f'' q - (m/2)(gamma''/gamma)(q - f)^2,
        up to an additive constant (gauge)."""
        q = np.asarray(q, dtype=float)
        fv, _, fdd, gv, _, gdd = self._sched(t, p)
        return -p.mass * fdd * q - 0.5 * p.mass * (gdd / gv) * (q - fv) ** 2


@dataclass(frozen=True)
class Tabulated:
    """Potential given by samples on a (t, q) mesh; cubic in q, linear in t.

    q outside the tabulated range is an error (a confining continuation
    cannot be guessed); t is clamped to the tabulated window.
    """

    q_nodes: np.ndarray
    t_nodes: np.ndarray
    samples: np.ndarray  # shape (len(t_nodes), len(q_nodes))
    _spline: object = field(init=False, repr=False, compare=False)

    name = "tabulated"

    def __post_init__(self):
        from scipy.interpolate import RectBivariateSpline

        qn = np.asarray(self.q_nodes, dtype=float)
        tn = np.asarray(self.t_nodes, dtype=float)
        zz = np.asarray(self.samples, dtype=float)
        if zz.shape != (tn.size, qn.size):
            raise ValueError(f"samples shape {zz.shape} != (t={tn.size}, q={qn.size})")
        spl = RectBivariateSpline(qn, tn, zz.T, kx=3, ky=1, s=0)  # linear in t
        object.__setattr__(self, "q_nodes", qn)
        object.__setattr__(self, "t_nodes", tn)
        object.__setattr__(self, "samples", zz)
        object.__setattr__(self, "_spline", spl)

    def _check_q(self, q: np.ndarray):
        if np.any(q < self.q_nodes[0]) or np.any(q > self.q_nodes[-1]):
            raise NumericalError(
                f"tabulated potential queried outside q range "
                f"[{self.q_nodes[0]}, {self.q_nodes[-1]}]"
            )

    def value(self, q, t: float, p: PhysicalParams):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        self._check_q(q)
        tc = float(np.clip(t, self.t_nodes[0], self.t_nodes[-1]))
        return self._spline.ev(q, np.full_like(q, tc))

    def value_dt(self, q, t: float, p: PhysicalParams):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        self._check_q(q)
        if t < self.t_nodes[0] or t > self.t_nodes[-1]:
            return np.zeros_like(q)
        tc = float(np.clip(t, self.t_nodes[0], self.t_nodes[-1]))
        return self._spline.ev(q, np.full_like(q, tc), dy=1)

    def value_dq(self, q, t: float, p: PhysicalParams):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        self._check_q(q)
        tc = float(np.clip(t, self.t_nodes[0], self.t_nodes[-1]))
        return self._spline.ev(q, np.full_like(q, tc), dx=1)


PotentialSpec = Union[QuarticTilt, Harmonic, ScaleInvariant, Tabulated]


def evaluate_potential(spec: PotentialSpec, params: PhysicalParams, grid: Grid1D, t: float) -> Field:
    """Sample U0(., t) on the grid.  Non-finite values are a hard error."""
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.asarray(spec.value(grid.points, t, params), dtype=float)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NumericalError(
            f"potential is not finite at q={grid.points[i]}, t={t} "
            f"(value {vals[i]})"
        )
    return Field(grid, vals, t)


def evaluate_potential_time_derivative(
    spec: PotentialSpec, params: PhysicalParams, grid: Grid1D, t: float
) -> Field:
    """dU0/dt at fixed q; zero outside the protocol window by clamping."""
    vals = np.asarray(spec.value_dt(grid.points, t, params), dtype=float)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NumericalError(
            f"potential time derivative is not finite at q={grid.points[i]}, t={t}"
        )
    return Field(grid, vals, t)


def potential_force(spec: PotentialSpec, params: PhysicalParams, q, t: float):
    """-dU0/dq evaluated at arbitrary positions (classical force of the bare
    potential)."""
    return -np.asarray(spec.value_dq(q, t, params), dtype=float)


# --- run configuration -----------------------------------------------------

_CONFIG_KEYS = {
    "potential": str,
    "mass": float,
    "hbar": float,
    "tau": float,
    "n": int,
    "q_max": float,
    "grid_points": int,
    "dt_quantum": float,
    "dt_classical": float,
    "n_trajectories": int,
    "theta_bins": int,
    "output_dir": str,
}


@dataclass(frozen=True)
class RunConfig:
    potential: str = "quartic"
    mass: float = 1.0
    hbar: float = 2.0
    tau: float = 1.0
    n: int = 17
    q_max: float = 8.0
    grid_points: int = 1024
    dt_quantum: float = 1e-4
    dt_classical: float = 1e-4
    n_trajectories: int = 20000
    theta_bins: int = 64
    output_dir: str = "out"

    def params(self) -> PhysicalParams:
        return PhysicalParams(mass=self.mass, hbar=self.hbar, tau=self.tau, n=self.n)

    def grid(self) -> Grid1D:
        return Grid1D(-self.q_max, self.q_max, self.grid_points)

    def spec(self) -> PotentialSpec:
        return make_potential_spec(self.potential)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in _CONFIG_KEYS}


def make_potential_spec(name: str) -> PotentialSpec:
    """Potential variants reachable from a config file."""
    name = name.strip().lower()
    if name == "quartic":
        return QuarticTilt()
    if name == "harmonic":
        return Harmonic()
    if name.startswith("harmonic:"):
        try:
            omega = float(name.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad harmonic frequency in potential={name!r}") from exc
        return Harmonic(omega=omega)
    raise ConfigError(
        f"unknown potential {name!r}; configs support 'quartic', 'harmonic' or 'harmonic:<omega>'"
    )


def load_config(path: str) -> RunConfig:
    """Parse a flat `key = value` config file with `#` comments.

    Unknown keys are an error; missing keys fall back to defaults.
    """
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    overrides: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            caster = _CONFIG_KEYS[key]
            try:
                overrides[key] = caster(value)
            except ValueError as exc:
                raise ConfigError(
                    f"{path}:{lineno}: cannot parse {key} = {value!r} as {caster.__name__}"
                ) from exc
    cfg = RunConfig(**overrides)
    cfg.params()  # validate physical parameter ranges
    if cfg.potential not in ("quartic", "harmonic") and not cfg.potential.startswith("harmonic:"):
        make_potential_spec(cfg.potential)  # raises ConfigError
    return cfg
