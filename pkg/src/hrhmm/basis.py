"""Clamped cubic B-spline basis for position-specific age trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGREE = 3


@dataclass(frozen=True)
class SplineBasis:
    age_lo: float
    age_hi: float
    knots: tuple[float, ...]
    degree: int = DEGREE

    @property
    def interior_knots(self) -> tuple[float, ...]:
        return self.knots[self.degree + 1 : len(self.knots) - self.degree - 1]

    @property
    def n_basis(self) -> int:
        return len(self.knots) - self.degree - 1


def make_basis(age_lo: float, age_hi: float, interior_knots=()) -> SplineBasis:
    """Clamped cubic basis on ``[age_lo, age_hi]``.

    With no interior knots this is the cubic Bernstein basis: four functions.
    """
    age_lo, age_hi = float(age_lo), float(age_hi)
    if not age_lo < age_hi:
        raise ValueError(f"age_lo ({age_lo}) must be below age_hi ({age_hi})")
    inner = [float(k) for k in interior_knots]
    if any(b <= a for a, b in zip(inner, inner[1:])):
        raise ValueError(f"interior knots must be strictly increasing: {inner}")
    if any(not age_lo < k < age_hi for k in inner):
        raise ValueError(f"interior knots must lie strictly inside ({age_lo}, {age_hi}): {inner}")
    knots = (age_lo,) * (DEGREE + 1) + tuple(inner) + (age_hi,) * (DEGREE + 1)
    return SplineBasis(age_lo, age_hi, knots)


def eval_basis(b: SplineBasis, age) -> np.ndarray:
    """Basis weights at ``age`` (scalar -> shape (n_basis,), array -> (n, n_basis)).

    Ages outside the basis range are clamped to the nearest endpoint.
    """
    scalar = np.ndim(age) == 0
    x = np.clip(np.atleast_1d(np.asarray(age, dtype=np.float64)), b.age_lo, b.age_hi)
    t = np.asarray(b.knots)
    p = b.degree
    n = b.n_basis
    # span index mu with t[mu] <= x < t[mu+1]; the right endpoint belongs to the last span
    mu = np.searchsorted(t, x, side="right") - 1
    mu = np.minimum(mu, n - 1)

    # de Boor's triangular scheme, nonzero functions only
    N = np.zeros((x.size, p + 1))
    N[:, 0] = 1.0
    left = np.zeros((x.size, p + 1))
    right = np.zeros((x.size, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - t[mu + 1 - j]
        right[:, j] = t[mu + j] - x
        saved = np.zeros(x.size)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = np.divide(N[:, r], denom, out=np.zeros(x.size), where=denom != 0)
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved

    out = np.zeros((x.size, n))
    rows = np.arange(x.size)
    for r in range(p + 1):
        out[rows, mu - p + r] = N[:, r]
    return out[0] if scalar else out


def trajectory(coeffs, b: SplineBasis, age):
    """Log-odds contribution ``sum_l coeffs[l] * B_l(age)``."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape[-1] != b.n_basis:
        raise ValueError(f"expected {b.n_basis} coefficients, got {coeffs.shape[-1]}")
    return eval_basis(b, age) @ coeffs
