"""Convergence diagnostics across chains."""

from __future__ import annotations

import numpy as np

from .store import ChainStore


def gelman_rubin(draws: np.ndarray) -> np.ndarray:
    """Potential scale reduction factor for draws of shape (chains, draws, ...).

    Uses the pooled-variance estimate ``(n-1)/n * W + B/n`` over the mean
    within-chain variance ``W``. Parameters that are constant within and
    across chains get 1.0; constant within but differing across chains get inf.
    """
    x = np.asarray(draws, dtype=np.float64)
    if x.ndim < 2:
        raise ValueError("draws must have shape (chains, draws, ...)")
    m, n = x.shape[:2]
    if m < 2 or n < 2:
        raise ValueError("need at least two chains with two draws each")
    within = x.var(axis=1, ddof=1).mean(axis=0)
    between_over_n = x.mean(axis=1).var(axis=0, ddof=1)
    pooled = (n - 1) / n * within + between_over_n
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt(pooled / within)
    r = np.where(within > 0, r, np.where(between_over_n > 0, np.inf, 1.0))
    return r


def chain_rhat(chains: list[ChainStore], param: str | None = None):
    """Potential scale reduction factors from stored chains.

    With ``param`` (a column name such as ``"alpha[SS:1]"``) returns one
    float; otherwise returns ``(names, values)`` for every scalar parameter.
    """
    if len(chains) < 2:
        raise ValueError("need at least two chains")
    names, _ = chains[0].parameters()
    n = min(c.n_draws for c in chains)
    stack = np.stack([c.parameters()[1][:n] for c in chains])
    if param is None:
        return names, gelman_rubin(stack)
    try:
        j = names.index(param)
    except ValueError:
        raise KeyError(f"unknown parameter {param!r}") from None
    return float(gelman_rubin(stack[:, :, j]))
