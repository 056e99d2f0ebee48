"""Joint model: binomial-logit likelihood, elite mixture, Markov elite status, priors.

Log-odds for a player-season at position group ``k``, park ``b`` and elite
status ``e``::

    alpha[k, e] + beta[b] + f_k(age)

with ``f_k(age) = gamma[k] . (B(age) - B(ref_age))``. Subtracting the basis at
the reference age makes ``f_k(ref_age) = 0`` so the constant level lives in
``alpha``; ``alpha`` reads as the log-odds at the reference age.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.special import expit, gammaln

from .basis import SplineBasis, eval_basis, make_basis
from .data import POSITIONS, Dataset, PlayerSeason

FULL = "full"
NO_POSITION = "no_position_no_elite"
PSHMM = "pshmm"
VARIANTS = (FULL, NO_POSITION, PSHMM)

# column order of every 4-vector of transition parameters
NU_LABELS = ("00", "01", "10", "11")


@dataclass(frozen=True)
class Hyperparams:
    tau2: float = 10000.0
    omega: float = 1.0
    age_lo: float | None = None
    age_hi: float | None = None
    interior_knots: tuple[float, ...] = ()
    ref_age: float | None = None
    variant: str = FULL

    def __post_init__(self):
        if not self.tau2 > 0:
            raise ValueError("tau2 must be positive")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        object.__setattr__(self, "interior_knots", tuple(float(k) for k in self.interior_knots))

    def resolve(self, d: Dataset) -> "Hyperparams":
        """Fill the age range and reference age from the data where unset."""
        ages = d.columns["age"]
        if ages.size == 0 and None in (self.age_lo, self.age_hi, self.ref_age):
            raise ValueError("cannot infer age range from an empty dataset")
        lo = float(ages.min()) if self.age_lo is None else float(self.age_lo)
        hi = float(ages.max()) if self.age_hi is None else float(self.age_hi)
        if lo == hi:
            hi = lo + 1.0
        ref = float(np.median(ages)) if self.ref_age is None else float(self.ref_age)
        return replace(self, age_lo=lo, age_hi=hi, ref_age=ref)

    @property
    def resolved(self) -> bool:
        return None not in (self.age_lo, self.age_hi, self.ref_age)

    @cached_property
    def basis(self) -> SplineBasis:
        if self.age_lo is None or self.age_hi is None:
            raise ValueError("Hyperparams not resolved against a dataset")
        return make_basis(self.age_lo, self.age_hi, self.interior_knots)

    @cached_property
    def ref_weights(self) -> np.ndarray:
        return eval_basis(self.basis, self.ref_age)

    @property
    def n_groups(self) -> int:
        return 1 if self.variant == NO_POSITION else len(POSITIONS)

    @property
    def n_states(self) -> int:
        return 1 if self.variant == NO_POSITION else 2

    @property
    def group_labels(self) -> tuple[str, ...]:
        return ("ALL",) if self.variant == NO_POSITION else POSITIONS

    def group_of(self, position):
        return np.zeros_like(position) if self.variant == NO_POSITION else position

    def centered_basis(self, age) -> np.ndarray:
        return eval_basis(self.basis, age) - self.ref_weights

    def to_dict(self) -> dict:
        return {
            "tau2": self.tau2, "omega": self.omega, "age_lo": self.age_lo, "age_hi": self.age_hi,
            "interior_knots": list(self.interior_knots), "ref_age": self.ref_age, "variant": self.variant,
        }


@dataclass
class ModelState:
    """One joint draw.

    ``nu`` rows are ``(nu00, nu01, nu10, nu11)`` per position group.
    ``nu_player`` and ``omega`` are only present for the player-specific
    transition variant.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    nu: np.ndarray
    elite: np.ndarray
    nu_player: np.ndarray | None = None
    omega: np.ndarray | None = None

    def copy(self) -> "ModelState":
        return ModelState(
            self.alpha.copy(), self.beta.copy(), self.gamma.copy(), self.nu.copy(), self.elite.copy(),
            None if self.nu_player is None else self.nu_player.copy(),
            None if self.omega is None else self.omega.copy(),
        )

    def check(self) -> None:
        """Raise ``AssertionError`` if an invariant is violated."""
        if self.alpha.shape[1] == 2:
            assert np.all(self.alpha[:, 0] < self.alpha[:, 1]), f"alpha ordering violated: {self.alpha}"
        for nu in (self.nu, self.nu_player):
            if nu is None or nu.size == 0:
                continue
            assert np.all((nu >= 0) & (nu <= 1)), "transition probability outside [0, 1]"
            assert np.allclose(nu[:, 0] + nu[:, 1], 1.0) and np.allclose(nu[:, 2] + nu[:, 3], 1.0), \
                "transition rows must sum to one"
        assert set(np.unique(self.elite)).issubset({0, 1}), "elite indicators must be binary"


def canonicalize(state: ModelState, h: Hyperparams) -> ModelState:
    """Map a draw to its identified representative.

    The likelihood only sees ``alpha + beta`` and ``gamma`` through centered
    basis weights, so shifting all ``beta`` by ``c`` and all ``alpha`` by
    ``-c`` (or all of ``gamma[k]`` by a constant) leaves every rate
    unchanged. The representative has mean-zero ``beta`` and ``gamma`` rows
    shifted so that ``gamma[k] . B(ref_age) = 0``.
    """
    out = state.copy()
    shift = out.beta.mean() if out.beta.size else 0.0
    out.beta -= shift
    out.alpha += shift
    out.gamma -= (out.gamma @ h.ref_weights)[:, None]
    return out


def logistic(x):
    return expit(x)


def log_odds(state: ModelState, h: Hyperparams, position, park, age, e):
    """Vectorized log-odds; ``park`` may be -1 for an unknown park (effect 0)."""
    g = h.group_of(np.asarray(position))
    e = np.asarray(e) if h.n_states == 2 else np.zeros_like(np.asarray(e))
    park = np.asarray(park)
    b = np.where(park >= 0, state.beta[np.maximum(park, 0)] if state.beta.size else 0.0, 0.0)
    f = np.einsum("...l,...l->...", h.centered_basis(age), state.gamma[g])
    return state.alpha[g, e] + b + f


def rate(state: ModelState, s: PlayerSeason, e: int, h: Hyperparams) -> float:
    return float(logistic(log_odds(state, h, s.position, s.park, float(s.age), e)))


def binom_logpmf(y, m, theta):
    y = np.asarray(y, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    coef = gammaln(m + 1) - gammaln(y + 1) - gammaln(m - y + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(y > 0, y * np.log(theta), 0.0)
        b = np.where(m - y > 0, (m - y) * np.log1p(-theta), 0.0)
    return coef + a + b


def loglik_season(state: ModelState, s: PlayerSeason, e: int, h: Hyperparams) -> float:
    """Binomial log-pmf of the season's home runs under elite status ``e``."""
    if s.ab == 0:
        return 0.0
    return float(binom_logpmf(s.hr, s.ab, rate(state, s, e, h)))


def log_transition(nu_k, frm: int, to: int) -> float:
    """``log nu_{from,to}`` for a row ``(nu00, nu01, nu10, nu11)``."""
    p = float(np.asarray(nu_k)[2 * frm + to])
    return float(np.log(p)) if p > 0 else -np.inf


def _norm_logpdf(x, var):
    x = np.asarray(x, dtype=np.float64)
    return -0.5 * np.log(2 * np.pi * var) - 0.5 * x * x / var


def _dirichlet2_logpdf(p, a, b):
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        la = np.where(a == 1, 0.0, (a - 1) * np.log(p))
        lb = np.where(b == 1, 0.0, (b - 1) * np.log1p(-p))
    return gammaln(a + b) - gammaln(a) - gammaln(b) + la + lb


def log_prior(state: ModelState, h: Hyperparams, player_group=None) -> float:
    """Log prior density up to the truncation constant of the alpha pairs.

    For the player-specific transition variant, ``player_group`` gives each
    player's position group; the player rows are scored against their
    group's Dirichlet hyperparameters and ``omega`` itself has a flat prior.
    """
    if state.alpha.shape[1] == 2 and np.any(state.alpha[:, 0] >= state.alpha[:, 1]):
        return -np.inf
    lp = _norm_logpdf(state.alpha, h.tau2).sum()
    lp += _norm_logpdf(state.beta, h.tau2).sum()
    lp += _norm_logpdf(state.gamma, h.tau2).sum()
    if h.n_states == 2:
        if state.nu_player is not None:
            if player_group is None:
                raise ValueError("player_group is required for player-specific transitions")
            w = state.omega[player_group]
            lp += _dirichlet2_logpdf(state.nu_player[:, 0], w[:, 0], w[:, 1]).sum()
            lp += _dirichlet2_logpdf(state.nu_player[:, 3], w[:, 3], w[:, 2]).sum()
        else:
            lp += _dirichlet2_logpdf(state.nu[:, 0], h.omega, h.omega).sum()
            lp += _dirichlet2_logpdf(state.nu[:, 3], h.omega, h.omega).sum()
    return float(lp)


@dataclass
class Design:
    """Row-aligned arrays consumed by the samplers."""

    hyper: Hyperparams
    y: np.ndarray
    m: np.ndarray
    group: np.ndarray
    park: np.ndarray
    age: np.ndarray
    basis: np.ndarray          # centered basis weights, (n_rows, n_basis)
    offsets: np.ndarray
    player: np.ndarray
    trans_group: np.ndarray    # group whose transition row moves the chain into this row
    player_group: np.ndarray   # modal group per player
    n_parks: int
    first_row: np.ndarray = field(init=False)

    def __post_init__(self):
        self.first_row = np.zeros(self.y.size, dtype=bool)
        self.first_row[self.offsets[:-1]] = True

    @property
    def n_rows(self) -> int:
        return self.y.size

    @property
    def n_players(self) -> int:
        return self.offsets.size - 1


def build_design(d: Dataset, h: Hyperparams) -> Design:
    if not h.resolved:
        h = h.resolve(d)
    c = d.columns
    group = h.group_of(c["position"]).astype(np.int64)
    trans = group.copy()
    if group.size:
        # transition into year t is governed by the position held in year t-1
        trans[1:] = group[:-1]
        trans[d.offsets[:-1]] = group[d.offsets[:-1]]
    pgroup = np.zeros(d.n_players, dtype=np.int64)
    for i in range(d.n_players):
        g = group[d.offsets[i] : d.offsets[i + 1]]
        counts = np.bincount(g, minlength=h.n_groups)
        pgroup[i] = int(np.argmax(counts))
    return Design(
        hyper=h,
        y=c["hr"].astype(np.float64),
        m=c["ab"].astype(np.float64),
        group=group,
        park=c["park"].copy(),
        age=c["age"].copy(),
        basis=np.ascontiguousarray(h.centered_basis(c["age"]).reshape(len(d.seasons), h.basis.n_basis)),
        offsets=d.offsets.copy(),
        player=c["player"].copy(),
        trans_group=trans,
        player_group=pgroup,
        n_parks=d.n_parks,
    )


def linear_predictor(state: ModelState, x: Design) -> np.ndarray:
    e = state.elite.astype(np.int64) if x.hyper.n_states == 2 else np.zeros(x.n_rows, dtype=np.int64)
    f = np.einsum("rl,rl->r", x.basis, state.gamma[x.group])
    return state.alpha[x.group, e] + state.beta[x.park] + f


def row_transitions(state: ModelState, x: Design) -> np.ndarray:
    """Transition row (nu00, nu01, nu10, nu11) that leads into each data row."""
    if state.nu_player is not None:
        return state.nu_player[x.player]
    return state.nu[x.trans_group]


def log_posterior(state: ModelState, d: Dataset, h: Hyperparams) -> float:
    """Unnormalized log posterior: data terms + elite-chain terms + prior."""
    h = h if h.resolved else h.resolve(d)
    x = build_design(d, h)
    lp = log_prior(state, h, x.player_group)
    if not np.isfinite(lp):
        return -np.inf
    eta = linear_predictor(state, x)
    ll = binom_logpmf(x.y, x.m, expit(eta)).sum()
    if h.n_states == 2:
        nu = row_transitions(state, x)
        e = state.elite.astype(np.int64)
        prev = np.empty_like(e)
        prev[1:] = e[:-1]
        prev[x.first_row] = 0
        with np.errstate(divide="ignore"):
            ll += np.log(nu[np.arange(e.size), 2 * prev + e]).sum()
    return float(ll + lp)
