"""Uniform 1-D spatial grids and fields sampled on them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError


@dataclass(frozen=True, eq=True)
class Grid1D:
    """Uniform grid on [q_min, q_max] with n points (endpoints included)."""

    q_min: float
    q_max: float
    n: int
    _points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 16:
            raise ValueError(f"grid needs at least 16 points, got {self.n}")
        if not self.q_min < self.q_max:
            raise ValueError(f"need q_min < q_max, got [{self.q_min}, {self.q_max}]")
        pts = np.linspace(self.q_min, self.q_max, self.n)
        pts.flags.writeable = False
        object.__setattr__(self, "_points", pts)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / (self.n - 1)

    def wavenumbers(self) -> np.ndarray:
        """FFT wavenumbers for this grid (periodic continuation)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dq)

    def index_of(self, q: float) -> int:
        """Index of the grid point nearest to q."""
        return int(np.clip(round((q - self.q_min) / self.dq), 0, self.n - 1))


@dataclass(frozen=True)
class Field:
    """Real or complex function sampled on a Grid1D at a fixed time."""

    grid: Grid1D
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape != (self.grid.n,):
            raise ValueError(
                f"field shape {vals.shape} does not match grid with n={self.grid.n}"
            )
        object.__setattr__(self, "values", vals)

    def norm_sq(self) -> float:
        """Discrete L2 norm squared, sum |f|^2 dq."""
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dq)

    def normalized(self) -> "Field":
        nrm = np.sqrt(self.norm_sq())
        if nrm <= 0.0:
            raise NumericalError("cannot normalize a zero field")
        return Field(self.grid, self.values / nrm, self.t)


def require_same_grid(a: Grid1D, b: Grid1D, what: str) -> None:
    if a != b:
        raise ValueError(
            f"grid mismatch in {what}: [{a.q_min},{a.q_max}]x{a.n} "
            f"vs [{b.q_min},{b.q_max}]x{b.n}"
        )
