"""Single-coefficient Metropolis-Hastings with MLE-centred independence proposals."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from ..errors import SamplerError
from ..model import Design, Hyperparams, ModelState, linear_predictor
from . import _kernels as K

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 50

# A block names one scalar coefficient: ("alpha", k, e), ("beta", b) or ("gamma", k, l).
Block = tuple


def block_rows(block: Block, state: ModelState, x: Design):
    """Rows touched by a coefficient, their weights, the current value and the allowed interval."""
    kind = block[0]
    lo, hi = -np.inf, np.inf
    if kind == "alpha":
        _, k, e = block
        mask = x.group == k
        if state.alpha.shape[1] == 2:
            mask &= state.elite == e
            if e == 0:
                hi = state.alpha[k, 1]
            else:
                lo = state.alpha[k, 0]
        rows = np.flatnonzero(mask)
        return rows, np.ones(rows.size), float(state.alpha[k, e]), lo, hi
    if kind == "beta":
        _, b = block
        rows = np.flatnonzero(x.park == b)
        return rows, np.ones(rows.size), float(state.beta[b]), lo, hi
    if kind == "gamma":
        _, k, l = block
        rows = np.flatnonzero(x.group == k)
        return rows, np.ascontiguousarray(x.basis[rows, l]), float(state.gamma[k, l]), lo, hi
    raise ValueError(f"unknown coefficient block {block!r}")


def mle_center(block: Block, state: ModelState, x: Design, eta: np.ndarray | None = None) -> float:
    """Conditional MLE of one coefficient with everything else held fixed.

    When the likelihood has no finite maximum (no home runs, or nothing but
    home runs) half a pseudo-count is added, so an intercept over seasons
    with no home runs is centred at ``logit(1 / (2 * total_ab))``.
    """
    if eta is None:
        eta = linear_predictor(state, x)
    if not np.all(np.isfinite(eta)):
        raise SamplerError("non-finite linear predictor at the start of the MLE search")
    rows, w, c, _, _ = block_rows(block, state, x)
    yy, mm, off = K.gather(x.y, x.m, eta, rows, w, c)
    center, _, status, _ = K.newton_center(yy, mm, off, w, c, NEWTON_TOL, NEWTON_MAX_ITER)
    if status == K.FALLBACK:
        log.warning("MLE search for %s did not converge; using current value", block)
    return float(center)


def mh_update_coefficient(block: Block, state: ModelState, x: Design, h: Hyperparams,
                          rng: np.random.Generator, scale: float = 1.0,
                          eta: np.ndarray | None = None) -> tuple[ModelState, bool]:
    """Propose one coefficient from Normal(MLE, sd^2) and accept by the MH ratio.

    ``sd`` is ``scale`` times the curvature-based standard deviation of the
    conditional posterior at the MLE. The ratio includes the proposal
    densities (independence sampler). Proposals breaking the intercept
    ordering are rejected. Returns a new state and the accept flag.
    """
    if eta is None:
        eta = linear_predictor(state, x)
    eta = eta.copy()
    rows, w, c, lo, hi = block_rows(block, state, x)
    z = rng.standard_normal()
    logu = np.log(rng.random())
    value, accepted, _, _, status = K.mh_coefficient(
        x.y, x.m, eta, rows, w, c, h.tau2, scale, lo, hi, z, logu, NEWTON_TOL, NEWTON_MAX_ITER,
        block[0] == "alpha",
    )
    if status == K.FALLBACK:
        log.warning("MLE search for %s did not converge; proposal centred at current value", block)
    new = state.copy()
    getattr(new, block[0])[block[1:]] = value
    return new, bool(accepted)


def adapt_scales(scales: np.ndarray, accept_rate: np.ndarray, target: Sequence[float] = (0.2, 0.5),
                 factor: float = 1.25) -> np.ndarray:
    """Widen proposals that accept too often, narrow those that accept too rarely."""
    scales = np.asarray(scales, dtype=np.float64)
    rate = np.asarray(accept_rate, dtype=np.float64)
    out = scales.copy()
    out[rate > target[1]] *= factor
    out[rate < target[0]] /= factor
    return out
