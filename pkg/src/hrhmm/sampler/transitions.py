"""Conjugate Dirichlet updates for the elite-status transition parameters."""

from __future__ import annotations

import numpy as np

from ..model import Design


def previous_state(elite: np.ndarray, x: Design) -> np.ndarray:
    """Elite status in the preceding year, with the fixed non-elite start before year one."""
    e = np.asarray(elite, dtype=np.int64)
    prev = np.empty_like(e)
    if e.size:
        prev[1:] = e[:-1]
        prev[x.first_row] = 0
    return prev


def transition_counts(elite: np.ndarray, x: Design, by: np.ndarray | None = None, n_units: int | None = None):
    """Counts ``N[unit, a, b]`` of a -> b transitions, including the initial step from E_0 = 0.

    ``by`` assigns every row to a unit; the default is the position group in
    force for the transition into that row.
    """
    e = np.asarray(elite, dtype=np.int64)
    if by is None:
        by = x.trans_group
        n_units = x.hyper.n_groups
    prev = previous_state(e, x)
    flat = np.bincount(by * 4 + prev * 2 + e, minlength=n_units * 4)
    return flat.reshape(n_units, 2, 2)


def dirichlet_rows(counts: np.ndarray, prior: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw ``(nu00, nu01, nu10, nu11)`` rows from normalized Gamma variates.

    ``counts`` has shape (n, 2, 2); ``prior`` broadcasts to (n, 4) in the
    same column order.
    """
    n = counts.shape[0]
    shape = counts.reshape(n, 4) + np.broadcast_to(prior, (n, 4))
    g = rng.standard_gamma(shape)
    nu = np.empty((n, 4))
    for a in (0, 1):
        tot = g[:, 2 * a] + g[:, 2 * a + 1]
        # both variates can underflow to zero for tiny shapes
        tiny = tot <= 0
        tot = np.where(tiny, 1.0, tot)
        nu[:, 2 * a] = np.where(tiny, 0.5, g[:, 2 * a] / tot)
        nu[:, 2 * a + 1] = 1.0 - nu[:, 2 * a]
    return nu


def sample_transitions(elite: np.ndarray, x: Design, omega: float, rng: np.random.Generator) -> np.ndarray:
    """Shared per-position transition rows given the elite paths."""
    counts = transition_counts(elite, x)
    return dirichlet_rows(counts, np.full(4, float(omega)), rng)
