"""Forward-filtering backward-sampling of the latent elite paths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import Design, ModelState, row_transitions
from ..errors import SamplerError
from . import _kernels as K


@dataclass
class FfbsWorkspace:
    """Per-row scratch space: filtered probabilities and emission log-likelihoods."""

    filtered: np.ndarray
    loglik: np.ndarray

    @classmethod
    def empty(cls, n_rows: int) -> "FfbsWorkspace":
        return cls(np.zeros((n_rows, 2)), np.zeros((n_rows, 2)))


def base_predictor(state: ModelState, x: Design) -> np.ndarray:
    """Linear predictor without the intercept: park effect plus age trajectory."""
    return state.beta[x.park] + np.einsum("rl,rl->r", x.basis, state.gamma[x.group])


def emission_loglik(state: ModelState, x: Design, base: np.ndarray | None = None) -> np.ndarray:
    if base is None:
        base = base_predictor(state, x)
    return K.emission_loglik(
        x.y, x.m, base, np.ascontiguousarray(state.alpha[x.group, 0]), np.ascontiguousarray(state.alpha[x.group, 1])
    )


def forward_filter(loglik: np.ndarray, trans: np.ndarray) -> np.ndarray:
    """Filtered P(E_t = e | data up to t) for one player's rows."""
    n = loglik.shape[0]
    filt = np.zeros((n, 2))
    ok = K.forward_filter(np.ascontiguousarray(loglik), np.ascontiguousarray(trans), 0, n, filt)
    if not ok:
        raise SamplerError("forward filter collapsed: both elite states have zero probability")
    return filt


def smoothed_marginals(filtered: np.ndarray, trans: np.ndarray) -> np.ndarray:
    """P(E_t = e | all of the player's data) by the backward recursion."""
    n = filtered.shape[0]
    sm = np.zeros_like(filtered)
    sm[-1] = filtered[-1]
    for t in range(n - 2, -1, -1):
        T = trans[t + 1].reshape(2, 2)
        pred = filtered[t] @ T
        ratio = np.divide(sm[t + 1], pred, out=np.zeros(2), where=pred > 0)
        sm[t] = filtered[t] * (T @ ratio)
    return sm


def ffbs_player(x: Design, i: int, state: ModelState, rng: np.random.Generator,
                ws: FfbsWorkspace | None = None) -> np.ndarray:
    """Exact joint draw of player ``i``'s elite path given everything else."""
    lo, hi = int(x.offsets[i]), int(x.offsets[i + 1])
    rows = slice(lo, hi)
    trans = np.ascontiguousarray(row_transitions(state, x)[rows])
    sub_state_ll = emission_loglik(state, x)[rows]
    filt = forward_filter(sub_state_ll, trans)
    out = np.zeros(hi - lo, dtype=np.int8)
    K.backward_sample(filt, trans, 0, hi - lo, rng.random(hi - lo), out)
    if ws is not None:
        ws.filtered[rows] = filt
        ws.loglik[rows] = sub_state_ll
    return out


def ffbs_all(x: Design, state: ModelState, u: np.ndarray, base: np.ndarray | None = None,
             ws: FfbsWorkspace | None = None) -> np.ndarray:
    """Draw every player's path; ``u`` holds one uniform per row."""
    ll = emission_loglik(state, x, base)
    trans = np.ascontiguousarray(row_transitions(state, x))
    out = np.zeros(x.n_rows, dtype=np.int8)
    filt = ws.filtered if ws is not None else np.zeros((x.n_rows, 2))
    bad = K.ffbs_all(ll, trans, x.offsets, u, out, filt)
    if bad >= 0:
        raise SamplerError(f"forward filter collapsed for player index {bad}")
    if ws is not None:
        ws.loglik[:] = ll
    return out


def backward_sample_many(filtered: np.ndarray, trans: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Many independent backward passes for one player; ``u`` has shape (draws, n)."""
    draws, n = u.shape
    paths = np.zeros((draws, n), dtype=np.int8)
    e = (u[:, -1] < filtered[-1, 1]).astype(np.int64)
    paths[:, -1] = e
    for t in range(n - 2, -1, -1):
        w0 = filtered[t, 0] * trans[t + 1, e]
        w1 = filtered[t, 1] * trans[t + 1, 2 + e]
        e = (u[:, t] < w1 / (w0 + w1)).astype(np.int64)
        paths[:, t] = e
    return paths
