"""Generative simulation from the model and brute-force oracles for testing.

The oracles are deliberately naive: elite-path posteriors by enumerating all
``2**n`` paths, and one-dimensional posterior moments by numerical quadrature.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, stats
from scipy.special import expit

from .data import POSITIONS, Dataset, TargetSeason, build_dataset
from .model import FULL, Hyperparams, ModelState, binom_logpmf, build_design, log_odds

MAX_ENUMERATE = 20


@dataclass(frozen=True)
class Schedule:
    """Covariates of one player's career: a row per season."""

    player_id: str
    years: tuple[int, ...]
    ages: tuple[int, ...]
    parks: tuple[str, ...]
    positions: tuple[int, ...]
    ab: tuple[int, ...]

    def __post_init__(self):
        n = len(self.years)
        if not all(len(v) == n for v in (self.ages, self.parks, self.positions, self.ab)):
            raise ValueError(f"{self.player_id}: schedule columns differ in length")


@dataclass(frozen=True)
class TrueParams:
    """Generating parameters (``state.elite`` is ignored) plus career schedules.

    ``parks`` orders the park effects in ``state.beta``.
    """

    state: ModelState
    hyper: Hyperparams
    parks: tuple[str, ...]
    schedules: tuple[Schedule, ...]

    def __post_init__(self):
        if self.state.beta.size != len(self.parks):
            raise ValueError("one park effect per park name is required")
        if self.state.alpha.shape[1] == 2 and not np.all(self.state.alpha[:, 0] < self.state.alpha[:, 1]):
            raise ValueError("elite intercepts must exceed non-elite intercepts")


def simulate(tp: TrueParams, rng: np.random.Generator) -> tuple[Dataset, np.ndarray]:
    """Generate home-run counts; returns the dataset and the true elite status per dataset row.

    Each career starts from the non-elite state before its first season; the
    transition into a season uses the row of the position held the season
    before (the season's own position for the first).
    """
    st, h = tp.state, tp.hyper
    park_index = {p: i for i, p in enumerate(tp.parks)}
    two_state = h.n_states == 2
    rows, elite_of = [], {}
    for sc in tp.schedules:
        e_prev, g_prev = 0, None
        for t, year in enumerate(sc.years):
            pos = sc.positions[t]
            g = int(h.group_of(np.asarray(pos)))
            if two_state:
                nu_row = st.nu[g if g_prev is None else g_prev]
                e = int(rng.random() < nu_row[2 * e_prev + 1])
            else:
                e = 0
            b = park_index[sc.parks[t]]
            theta = expit(log_odds(st, h, pos, b, float(sc.ages[t]), e))
            y = int(rng.binomial(sc.ab[t], theta))
            rows.append((sc.player_id, year, y, sc.ab[t], sc.ages[t], sc.parks[t], pos))
            elite_of[(sc.player_id, year)] = e
            e_prev, g_prev = e, g
    d = build_dataset(rows)
    elite = np.array([elite_of[(s.player_id, s.year)] for s in d.seasons], dtype=np.int8)
    return d, elite


def default_schedules(rng: np.random.Generator, n_players: int = 500, n_seasons: int = 10,
                      parks: tuple[str, ...] = tuple(f"PK{j:02d}" for j in range(12)),
                      ab_range: tuple[int, int] = (200, 600), start_age: tuple[int, int] = (22, 28),
                      first_year: int = 1990, switch_prob: float = 0.05) -> tuple[Schedule, ...]:
    """Careers of equal length with ages advancing one year per season.

    Positions start uniformly over the nine labels and switch with
    ``switch_prob`` per season; every season's park is drawn uniformly.
    """
    out = []
    width = len(str(n_players))
    for i in range(n_players):
        age0 = int(rng.integers(start_age[0], start_age[1] + 1))
        pos = [int(rng.integers(len(POSITIONS)))]
        for _ in range(n_seasons - 1):
            pos.append(int(rng.integers(len(POSITIONS))) if rng.random() < switch_prob else pos[-1])
        out.append(Schedule(
            player_id=f"p{i:0{width}d}",
            years=tuple(first_year + t for t in range(n_seasons)),
            ages=tuple(age0 + t for t in range(n_seasons)),
            parks=tuple(parks[j] for j in rng.integers(len(parks), size=n_seasons)),
            positions=tuple(pos),
            ab=tuple(int(v) for v in rng.integers(ab_range[0], ab_range[1] + 1, size=n_seasons)),
        ))
    return tuple(out)


def default_true_params(rng: np.random.Generator, n_players: int = 500, n_seasons: int = 10,
                        **schedule_kw) -> TrueParams:
    """Baseball-like truth: non-elite rates of 1.5-3.5%, elite intercepts 1.2 logits higher,
    rare entry into a sticky elite state, a rise-and-fall age curve and modest park effects.

    The transition rows are chosen so that every position sees a few hundred
    transitions out of each state in a 500 x 10 career set; that is what
    makes every transition probability recoverable to within a few hundredths.
    """
    schedules = default_schedules(rng, n_players, n_seasons, **schedule_kw)
    parks = tuple(sorted({p for s in schedules for p in s.parks}))
    base = np.linspace(-4.1, -3.3, len(POSITIONS))
    alpha = np.column_stack([base, base + 1.2])
    beta = np.linspace(-0.2, 0.2, len(parks))
    ages = [a for s in schedules for a in s.ages]
    h = Hyperparams(age_lo=float(min(ages)), age_hi=float(max(ages)), ref_age=float(np.median(ages)))
    curve = np.array([-0.4, 0.25, 0.1, -0.5])
    gamma = np.tile(curve - curve @ h.ref_weights, (len(POSITIONS), 1))
    nu = np.tile([0.92, 0.08, 0.03, 0.97], (len(POSITIONS), 1))
    st = ModelState(alpha, beta, gamma, nu, np.zeros(0, dtype=np.int8))
    return TrueParams(st, h, parks, schedules)


def extend_schedules(tp: TrueParams, rng: np.random.Generator, ab_range=(200, 600)) -> TrueParams:
    """Append one season to every career: next year, one year older, same position and park."""
    out = []
    for s in tp.schedules:
        out.append(replace(
            s, years=s.years + (s.years[-1] + 1,), ages=s.ages + (s.ages[-1] + 1,),
            parks=s.parks + (s.parks[-1],), positions=s.positions + (s.positions[-1],),
            ab=s.ab + (int(rng.integers(ab_range[0], ab_range[1] + 1)),),
        ))
    return replace(tp, schedules=tuple(out))


def split_last_season(d: Dataset) -> tuple[Dataset, list[TargetSeason]]:
    """Training data without each player's final season, and those seasons as hold-out rows."""
    train, hold = [], []
    for pid in d.player_ids:
        seasons = d.player_seasons(pid)
        for s in seasons[:-1]:
            train.append((s.player_id, s.year, s.hr, s.ab, s.age, d.parks[s.park], s.position))
        s = seasons[-1]
        hold.append(TargetSeason(s.player_id, s.year, s.hr, s.ab, s.age, d.parks[s.park], s.position))
    return build_dataset(train), hold


def _path_logprob(path, loglik, trans):
    lp, prev = 0.0, 0
    for t, e in enumerate(path):
        p = trans[t][2 * prev + e]
        if p <= 0:
            return -np.inf
        lp += np.log(p) + loglik[t][e]
        prev = e
    return lp


def enumerate_paths(loglik: np.ndarray, trans: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All elite paths of one career with their exact posterior probabilities.

    ``loglik[t, e]`` is the log-likelihood of season ``t`` under status ``e``;
    ``trans[t]`` is the transition row leading into season ``t``.
    """
    n = len(loglik)
    if n > MAX_ENUMERATE:
        raise ValueError(f"career of {n} seasons is too long to enumerate (max {MAX_ENUMERATE})")
    paths = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int8).reshape(-1, n)
    lps = np.array([_path_logprob(p, loglik, trans) for p in paths])
    top = lps.max()
    w = np.exp(lps - top)
    return paths, w / w.sum()


def enumerate_marginals(loglik: np.ndarray, trans: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact filtered ``P(E_t | seasons 1..t)`` and smoothed ``P(E_t | all seasons)``, shape (n, 2)."""
    n = len(loglik)
    paths, probs = enumerate_paths(loglik, trans)
    smoothed = np.zeros((n, 2))
    for e in (0, 1):
        smoothed[:, e] = probs @ (paths == e)
    filtered = np.zeros((n, 2))
    for t in range(n):
        sub_paths, sub_probs = enumerate_paths(loglik[: t + 1], trans[: t + 1])
        filtered[t, 1] = sub_probs @ sub_paths[:, t]
        filtered[t, 0] = 1.0 - filtered[t, 1]
    return filtered, smoothed


def player_emissions(seasons, state: ModelState, h: Hyperparams, parks=None) -> np.ndarray:
    """Binomial log-likelihood of each season under each status, computed row by row."""
    out = np.zeros((len(seasons), 2))
    for t, s in enumerate(seasons):
        for e in (0, 1):
            eta = log_odds(state, h, s.position, s.park, float(s.age), e)
            out[t, e] = binom_logpmf(s.hr, s.ab, expit(eta))
    return out


def player_transition_rows(seasons, state: ModelState, h: Hyperparams, player_row: int | None = None) -> np.ndarray:
    """Transition row into each season: the previous season's position group (own group first)."""
    if state.nu_player is not None:
        return np.tile(state.nu_player[player_row], (len(seasons), 1))
    groups = [int(h.group_of(np.asarray(s.position))) for s in seasons]
    return np.array([state.nu[groups[max(t - 1, 0)]] for t in range(len(seasons))])


def enumerate_elite_posterior(seasons, state: ModelState, h: Hyperparams, player_row: int | None = None):
    """Exact elite-path posterior for one player's seasons given all other parameters.

    Returns ``(paths, path_probs, filtered, smoothed)``.
    """
    seasons = list(seasons)
    if len(seasons) > MAX_ENUMERATE:
        raise ValueError(f"career of {len(seasons)} seasons is too long to enumerate (max {MAX_ENUMERATE})")
    ll = player_emissions(seasons, state, h)
    trans = player_transition_rows(seasons, state, h, player_row)
    paths, probs = enumerate_paths(ll, trans)
    filtered, smoothed = enumerate_marginals(ll, trans)
    return paths, probs, filtered, smoothed


class OracleError(RuntimeError):
    """The quadrature oracle cannot be trusted on the given bounds."""


def quadrature_posterior_1d(logdens, lo: float, hi: float, edge_frac: float = 0.01,
                            edge_tol: float = 1e-9, n_grid: int = 2001) -> tuple[float, float]:
    """Mean and variance of the density proportional to ``exp(logdens(x))`` on ``[lo, hi]``.

    The integrand is rescaled by its maximum over a grid. If the outer
    ``edge_frac`` of the interval on either side holds more than ``edge_tol``
    of the mass the bounds are too narrow and :class:`OracleError` is raised.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    grid = np.linspace(lo, hi, n_grid)
    lg = np.array([logdens(v) for v in grid])
    if not np.all(np.isfinite(lg) | (lg == -np.inf)):
        raise OracleError("log density is not finite on the bounds")
    top = np.max(lg)
    mode = grid[int(np.argmax(lg))]

    def f(v, power):
        return np.exp(logdens(v) - top) * v**power

    kw = dict(points=[mode], limit=1000, epsabs=1e-14, epsrel=1e-12)
    z = integrate.quad(f, lo, hi, args=(0,), **kw)[0]
    if not z > 0:
        raise OracleError("density integrates to zero")
    mean = integrate.quad(f, lo, hi, args=(1,), **kw)[0] / z
    second = integrate.quad(lambda v: np.exp(logdens(v) - top) * (v - mean) ** 2, lo, hi, **kw)[0] / z
    w = edge_frac * (hi - lo)
    edges = (integrate.quad(f, lo, lo + w, args=(0,), limit=200)[0]
             + integrate.quad(f, hi - w, hi, args=(0,), limit=200)[0]) / z
    if edges > edge_tol:
        raise OracleError(f"{edges:.3g} of the mass lies at the bounds; widen them")
    return mean, second


def draw_prior_state(h: Hyperparams, n_parks: int, n_rows: int, rng: np.random.Generator) -> ModelState:
    """An exact draw of every parameter from its prior (elite paths left at zero)."""
    sd = np.sqrt(h.tau2)
    G, S, L = h.n_groups, h.n_states, h.basis.n_basis
    alpha = np.sort(rng.normal(0.0, sd, size=(G, S)), axis=1)
    beta = rng.normal(0.0, sd, size=n_parks)
    gamma = rng.normal(0.0, sd, size=(G, L))
    p00 = rng.beta(h.omega, h.omega, size=G)
    p11 = rng.beta(h.omega, h.omega, size=G)
    nu = np.column_stack([p00, 1 - p00, 1 - p11, p11])
    return ModelState(alpha, beta, gamma, nu, np.zeros(n_rows, dtype=np.int8))


def draw_elite_paths(state: ModelState, x, rng: np.random.Generator) -> np.ndarray:
    """Forward-simulate every career's elite path from the transition rows."""
    from .model import row_transitions

    trans = row_transitions(state, x)
    u = rng.random(x.n_rows)
    e = np.zeros(x.n_rows, dtype=np.int8)
    prev = 0
    for r in range(x.n_rows):
        if x.first_row[r]:
            prev = 0
        e[r] = u[r] < trans[r, 2 * prev + 1]
        prev = e[r]
    return e


def geweke_schedules(rng: np.random.Generator, n_players: int = 20, n_parks: int = 4,
                     seasons=(3, 6), ab_range=(5, 40)) -> tuple[Schedule, ...]:
    """A small schedule with every position represented for prior-recovery tests."""
    parks = tuple(f"G{j}" for j in range(n_parks))
    out = []
    for i in range(n_players):
        n = int(rng.integers(seasons[0], seasons[1] + 1))
        pos0 = i % len(POSITIONS)
        pos = tuple(pos0 if rng.random() > 0.2 else int(rng.integers(len(POSITIONS))) for _ in range(n))
        age0 = int(rng.integers(21, 30))
        out.append(Schedule(
            player_id=f"g{i:02d}", years=tuple(2000 + t for t in range(n)),
            ages=tuple(age0 + 2 * t for t in range(n)),
            parks=tuple(parks[(i + t) % n_parks] for t in range(n)), positions=pos,
            ab=tuple(int(v) for v in rng.integers(ab_range[0], ab_range[1] + 1, size=n)),
        ))
    return tuple(out)


def geweke_draws(schedules, n_replicates: int, n_rounds: int, seed: int, tau2: float = 1.0,
                 sweep_hook=None) -> dict[str, np.ndarray]:
    """Successive-conditional prior recovery: start from an exact joint prior draw, then
    alternate a Gibbs sweep with resimulating the home-run counts.

    If every update leaves the posterior invariant, the final parameters are
    again exact prior draws. Returns raw (uncanonicalized) final draws keyed
    by parameter family, each with a leading replicate axis.
    """
    from .sampler.gibbs import GibbsChain, SamplerConfig

    rows = []
    for s in schedules:
        for t in range(len(s.years)):
            rows.append((s.player_id, s.years[t], 0, s.ab[t], s.ages[t], s.parks[t], s.positions[t]))
    d = build_dataset(rows)
    ages = d.columns["age"]
    h = Hyperparams(tau2=tau2, variant=FULL, age_lo=float(ages.min()), age_hi=float(ages.max()),
                    ref_age=float(np.median(ages)))
    x0 = build_design(d, h)
    config = SamplerConfig(n_chains=1, n_iter=n_rounds, burn_in=0, thin=1, jitter=0.0)
    seeds = np.random.SeedSequence(seed).spawn(n_replicates)
    out = {k: [] for k in ("alpha", "beta", "gamma", "nu")}
    for r in range(n_replicates):
        rng = np.random.default_rng(seeds[r])
        x = replace(x0, y=x0.y.copy())
        st = draw_prior_state(h, x.n_parks, x.n_rows, rng)
        st.elite = draw_elite_paths(st, x, rng)
        chain = GibbsChain(x, config, rng, state=st)
        x.y[:] = rng.binomial(x.m.astype(np.int64), expit(chain.eta))
        for _ in range(n_rounds):
            if sweep_hook is None:
                chain.sweep(count=False)
            else:
                sweep_hook(chain)
            x.y[:] = rng.binomial(x.m.astype(np.int64), expit(chain.eta))
        for k in out:
            out[k].append(getattr(chain.state, k).copy())
    return {k: np.array(v) for k, v in out.items()}


def geweke_pvalues(draws: dict[str, np.ndarray], tau2: float = 1.0) -> dict[str, float]:
    """KS p-values of every scalar against its exact prior marginal.

    The smaller of an intercept pair has CDF ``1 - (1 - Phi)^2`` and the
    larger ``Phi^2``; park and spline coefficients are Normal; the
    stay-probabilities of the transition rows are uniform.
    """
    sd = np.sqrt(tau2)
    out = {}
    alpha = draws["alpha"]
    for k in range(alpha.shape[1]):
        lo = stats.norm.cdf(alpha[:, k, 0], scale=sd)
        hi = stats.norm.cdf(alpha[:, k, 1], scale=sd)
        out[f"alpha[{k},0]"] = stats.kstest(1 - (1 - lo) ** 2, "uniform").pvalue
        out[f"alpha[{k},1]"] = stats.kstest(hi**2, "uniform").pvalue
    for b in range(draws["beta"].shape[1]):
        out[f"beta[{b}]"] = stats.kstest(draws["beta"][:, b], "norm", args=(0, sd)).pvalue
    G, L = draws["gamma"].shape[1:]
    for k in range(G):
        for l in range(L):
            out[f"gamma[{k},{l}]"] = stats.kstest(draws["gamma"][:, k, l], "norm", args=(0, sd)).pvalue
    for k in range(draws["nu"].shape[1]):
        out[f"nu[{k},00]"] = stats.kstest(draws["nu"][:, k, 0], "uniform").pvalue
        out[f"nu[{k},11]"] = stats.kstest(draws["nu"][:, k, 3], "uniform").pvalue
    return out
