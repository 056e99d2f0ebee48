"""Player-specific elite transitions with position-level Dirichlet hyperpriors.

Every player ``i`` carries their own transition rows ``nu_i``; the rows of
players whose modal position is ``k`` share Dirichlet parameters
``omega[k] = (w00, w01, w10, w11)`` with a flat prior restricted to
``[OMEGA_MIN, OMEGA_MAX]``.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.special import gammaln

from .model import Design, ModelState
from .sampler.transitions import dirichlet_rows, transition_counts

log = logging.getLogger(__name__)

OMEGA_MIN = 1e-3
OMEGA_MAX = 1e4
# proposal sd is this fraction of the centre, times the adaptive scale
REL_SD = 0.2
# (value column of nu, omega column of that value, omega column of its complement)
PAIRS = ((0, 0, 1), (3, 3, 2))

NO_PROPOSAL = -1


def sample_player_transitions(elite: np.ndarray, x: Design, omega: np.ndarray,
                              rng: np.random.Generator) -> np.ndarray:
    """Draw every player's rows from Dirichlet(own transition counts + group omega)."""
    counts = transition_counts(elite, x, by=x.player, n_units=x.n_players)
    return dirichlet_rows(counts, omega[x.player_group], rng)


def moment_estimates(values: np.ndarray) -> tuple[float, float] | None:
    """Beta parameters ``(a, b)`` matching the sample mean and (1/n) variance.

    Returns ``None`` when the moments admit no Beta distribution (fewer than
    two values, zero variance, or variance at least ``mean * (1 - mean)``).
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return None
    mean = v.mean()
    var = v.var()
    if not var > 0:
        return None
    total = mean * (1.0 - mean) / var - 1.0
    if not total > 0:
        return None
    return mean * total, (1.0 - mean) * total


def hyper_logpdf(a: float, b: float, values: np.ndarray) -> float:
    """Log conditional density of a Dirichlet pair given the players' draws (flat prior)."""
    if not (OMEGA_MIN <= a <= OMEGA_MAX and OMEGA_MIN <= b <= OMEGA_MAX):
        return -np.inf
    p = np.clip(np.asarray(values, dtype=np.float64), 1e-300, 1.0 - 1e-16)
    n = p.size
    return float(n * (gammaln(a + b) - gammaln(a) - gammaln(b))
                 + (a - 1.0) * np.log(p).sum() + (b - 1.0) * np.log1p(-p).sum())


def _norm_logpdf(x, mu, sd):
    return float(np.sum(-np.log(sd) - 0.5 * ((np.asarray(x) - mu) / sd) ** 2))


def mh_pair(current: np.ndarray, values: np.ndarray, scale: float,
            rng: np.random.Generator) -> tuple[np.ndarray, bool, bool]:
    """One MH update of a Dirichlet pair; returns (pair, accepted, used_random_walk).

    The default proposal is an independent Normal per component centred at
    the moment estimates. Without valid moments it falls back to a
    multiplicative random walk around the current pair.
    """
    current = np.asarray(current, dtype=np.float64)
    center = moment_estimates(values)
    z = rng.standard_normal(2)
    logu = np.log(rng.random())
    lp_cur = hyper_logpdf(current[0], current[1], values)
    if center is not None:
        mu = np.asarray(center)
        sd = scale * REL_SD * mu
        prop = mu + sd * z
        if np.any(prop <= 0):
            return current, False, False
        log_q = _norm_logpdf(current, mu, sd) - _norm_logpdf(prop, mu, sd)
        used_rw = False
    else:
        step = scale * REL_SD
        prop = current * np.exp(step * z)
        # Jacobian of the log-scale walk
        log_q = float(np.log(prop).sum() - np.log(current).sum())
        used_rw = True
    lp_new = hyper_logpdf(prop[0], prop[1], values)
    if np.isfinite(lp_new) and logu < lp_new - lp_cur + log_q:
        return prop, True, used_rw
    return current, False, used_rw


def sample_hyper(nu_player: np.ndarray, player_group: np.ndarray, omega: np.ndarray, k: int,
                 rng: np.random.Generator, scale=(1.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """Update ``omega[k]``: the non-elite pair from ``nu00`` values, then the elite pair from ``nu11``.

    Returns the new row and per-pair flags (1 accepted, 0 rejected,
    ``NO_PROPOSAL`` when no player belongs to the group).
    """
    row = np.asarray(omega[k], dtype=np.float64).copy()
    flags = np.full(2, NO_PROPOSAL, dtype=np.int64)
    members = player_group == k
    if not members.any():
        return row, flags
    for j, (col, wa, wb) in enumerate(PAIRS):
        values = nu_player[members, col]
        pair, acc, used_rw = mh_pair(row[[wa, wb]], values, scale[j], rng)
        if used_rw:
            log.debug("group %d: moment estimates undefined; random-walk proposal used", k)
        row[wa], row[wb] = pair
        flags[j] = int(acc)
    return row, flags


def update_hyper(state: ModelState, x: Design, scales: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Update every group's ``omega`` in place; returns (groups, 2) accept flags."""
    G = state.omega.shape[0]
    flags = np.full((G, 2), NO_PROPOSAL, dtype=np.int64)
    for k in range(G):
        state.omega[k], flags[k] = sample_hyper(state.nu_player, x.player_group, state.omega, k, rng, scales[k])
    return flags


def at_bounds(omega: np.ndarray) -> np.ndarray:
    """Groups whose Dirichlet parameters sit within 1% of the allowed range's ends."""
    edge = (omega <= OMEGA_MIN * 1.01) | (omega >= OMEGA_MAX * 0.99)
    return np.flatnonzero(edge.any(axis=1))


def group_means(omega: np.ndarray) -> np.ndarray:
    """Mean transition rows implied by each group's Dirichlet parameters."""
    omega = np.asarray(omega, dtype=np.float64)
    out = np.empty_like(omega)
    r0 = omega[:, 0] + omega[:, 1]
    r1 = omega[:, 2] + omega[:, 3]
    out[:, 0] = omega[:, 0] / r0
    out[:, 1] = 1.0 - out[:, 0]
    out[:, 3] = omega[:, 3] / r1
    out[:, 2] = 1.0 - out[:, 3]
    return out


def run_gibbs_pshmm(d, h, config, fixed_omega=None):
    """Fit the player-specific transition variant; see :func:`hrhmm.sampler.run_gibbs`.

    ``fixed_omega`` pins the Dirichlet parameters (groups, 4) and skips their update.
    """
    from dataclasses import replace

    from .model import PSHMM
    from .sampler.gibbs import run_gibbs

    if h.variant != PSHMM:
        h = replace(h, variant=PSHMM)
    return run_gibbs(d, h, config, fixed_omega=fixed_omega)
