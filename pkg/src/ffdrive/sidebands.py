"""Semiclassical sideband weights from the final angle distribution.

The weight of the state n + l after the protocol is the squared Fourier
coefficient of the square root of the final angle density:

    w_l = | int_0^{2pi} dtheta e^{-i l theta} sqrt(eta(theta) / 2 pi) |^2 .

A uniform distribution gives w_l = delta_{l0}: the shortcut is exact
precisely when the ensemble re-covers the shell uniformly.  Empty bins
contribute zero amplitude (no regularization).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cdyn import AngleDistribution

DEFAULT_L_MAX = 6


@dataclass(frozen=True)
class SidebandPrediction:
    """Predicted weights w_l for offsets l around the target level n."""

    n: int
    offsets: np.ndarray  # (2L+1,), integers -L..L
    weights: np.ndarray  # (2L+1,)

    def weight(self, l: int) -> float:
        return float(self.weights[list(self.offsets).index(l)])


@dataclass(frozen=True)
class SidebandComparison:
    """Side-by-side semiclassical weights and quantum populations."""

    k: np.ndarray
    semiclassical: np.ndarray
    quantum: np.ndarray

    @property
    def abs_diff(self) -> np.ndarray:
        return np.abs(self.semiclassical - self.quantum)

    @property
    def sup_diff(self) -> float:
        return float(self.abs_diff.max())


def predict_sidebands(
    eta: AngleDistribution, l_max: int = DEFAULT_L_MAX, n: int = 0
) -> SidebandPrediction:
    """Midpoint quadrature of the sideband integral over the histogram bins."""
    centers = eta.centers
    width = eta.bin_width
    amp = np.sqrt(eta.density / (2.0 * np.pi))
    offsets = np.arange(-l_max, l_max + 1)
    weights = np.empty(len(offsets))
    for i, l in enumerate(offsets):
        coeff = np.sum(width * np.exp(-1j * l * centers) * amp)
        weights[i] = float(np.abs(coeff) ** 2)
    return SidebandPrediction(n=n, offsets=offsets, weights=weights)


def compare(prediction: SidebandPrediction, populations: np.ndarray, n: int) -> SidebandComparison:
    """Align w_{k-n} with quantum p_k for all k = n + l inside range."""
    ks = []
    w = []
    p = []
    for l, weight in zip(prediction.offsets, prediction.weights):
        k = n + int(l)
        if 0 <= k < len(populations):
            ks.append(k)
            w.append(weight)
            p.append(float(populations[k]))
    return SidebandComparison(
        k=np.asarray(ks, dtype=int),
        semiclassical=np.asarray(w),
        quantum=np.asarray(p),
    )
