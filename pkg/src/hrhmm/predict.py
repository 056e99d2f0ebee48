"""Posterior predictive forecasts for a hold-out season, validation metrics, and
summaries of the fitted age curves, intercepts and elite onset."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .data import POSITIONS, Dataset, TargetSeason
from .model import NO_POSITION, PSHMM, Hyperparams
from .sampler.store import ChainStore, pooled

log = logging.getLogger(__name__)

INTERVAL_MASS = 0.80
ONSET_THRESHOLD = 0.5


def as_store(chains) -> ChainStore:
    if isinstance(chains, ChainStore):
        return chains
    return pooled(list(chains))


@dataclass
class PredictiveSummary:
    player_id: str
    year: int
    age: int
    position: int
    ab: int
    mean_total: float
    interval: tuple[int, int]
    elite_prob: float
    mean_rate: float
    n_draws: int
    rookie: bool = False
    unknown_park: bool = False
    rate_draws: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    total_draws: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), repr=False)


def _target_group(h: Hyperparams, position: int) -> int:
    return 0 if h.variant == NO_POSITION else int(position)


def predictive_rate(store: ChainStore, target: TargetSeason, rng: np.random.Generator,
                    h: Hyperparams | None = None) -> tuple[np.ndarray, float, bool, bool]:
    """Rate draws for the target season, one per stored draw.

    Each draw moves the player's last sampled elite status one step along
    the transition row in force (the last season's position group, or the
    player's own rows for the player-specific variant), then evaluates the
    rate at the target covariates. Players absent from the fit start from
    the non-elite state, and unknown parks get a zero park effect.

    Returns ``(rates, elite_prob, rookie, unknown_park)`` where ``elite_prob``
    averages the one-step elite probability over draws.
    """
    store = as_store(store)
    h = h or store.hyperparams()
    lay = store.layout
    g = _target_group(h, target.position)
    parks = lay["parks"]
    unknown_park = target.park not in parks
    beta = np.zeros(store.n_draws) if unknown_park else store.beta[:, parks.index(target.park)]
    cb = h.centered_basis(float(target.age))
    f = store.gamma[:, g, :] @ cb
    players = lay["players"]
    rookie = target.player_id not in players
    if h.n_states == 1:
        eta = store.alpha[:, g, 0] + beta + f
        return expit(eta), 0.0, rookie, unknown_park

    D = store.n_draws
    if rookie:
        e_last = np.zeros(D, dtype=np.int64)
        if h.variant == PSHMM:
            om = store.omega[:, g, :]
            p_elite = om[:, 1] / (om[:, 0] + om[:, 1])
        else:
            p_elite = store.nu[:, g, 1]
    else:
        i = players.index(target.player_id)
        last = lay["offsets"][i + 1] - 1
        e_last = store.elite[:, last].astype(np.int64)
        if h.variant == PSHMM:
            rows = store.nu_player[:, i, :]
        else:
            rows = store.nu[:, lay["last_group"][i], :]
        p_elite = rows[np.arange(D), 2 * e_last + 1]
    e_next = (rng.random(D) < p_elite).astype(np.int64)
    eta = store.alpha[np.arange(D), g, e_next] + beta + f
    return expit(eta), float(np.mean(p_elite)) if D else float("nan"), rookie, unknown_park


def shortest_interval(values: np.ndarray, mass: float = INTERVAL_MASS) -> tuple[int, int]:
    """Narrowest contiguous integer interval holding at least ``mass`` of the values.

    Among equally narrow intervals the one with the most mass wins, then the lowest.
    """
    v = np.asarray(values, dtype=np.int64)
    if v.size == 0:
        raise ValueError("no values")
    lo0 = int(v.min())
    counts = np.bincount(v - lo0)
    cum = np.concatenate([[0], np.cumsum(counts)])
    need = math.ceil(mass * v.size - 1e-9)
    k = counts.size
    best = None
    for lo in range(k):
        hi = int(np.searchsorted(cum, cum[lo] + need, side="left")) - 1
        if hi >= k:
            break
        key = (hi - lo, -(cum[hi + 1] - cum[lo]), lo)
        if best is None or key < best[0]:
            best = (key, lo, hi)
    _, lo, hi = best
    return lo0 + lo, lo0 + hi


def predictive_total(rate_draws: np.ndarray, m_true: int, rng: np.random.Generator,
                     mass: float = INTERVAL_MASS) -> tuple[np.ndarray, float, tuple[int, int]]:
    """One binomial total per rate draw, their mean and shortest ``mass`` interval."""
    if m_true < 0:
        raise ValueError("at-bats must be nonnegative")
    rate_draws = np.asarray(rate_draws, dtype=np.float64)
    if m_true == 0 or rate_draws.size == 0:
        return np.zeros(rate_draws.size, dtype=np.int64), 0.0, (0, 0)
    totals = rng.binomial(int(m_true), rate_draws)
    return totals, float(totals.mean()), shortest_interval(totals, mass)


def predict_season(chains, targets: Sequence[TargetSeason], seed: int = 0,
                   mass: float = INTERVAL_MASS) -> list[PredictiveSummary]:
    """Predictive summaries for every target, in ``(player_id, year)`` order."""
    store = as_store(chains)
    h = store.hyperparams()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    out = []
    for t in sorted(targets, key=lambda t: (t.player_id, t.year)):
        rates, p_elite, rookie, unknown = predictive_rate(store, t, rng, h)
        totals, mean, interval = predictive_total(rates, t.ab, rng, mass)
        out.append(PredictiveSummary(
            player_id=t.player_id, year=t.year, age=t.age, position=t.position, ab=t.ab,
            mean_total=mean, interval=interval, elite_prob=p_elite,
            mean_rate=float(rates.mean()) if rates.size else float("nan"), n_draws=int(rates.size),
            rookie=rookie, unknown_park=unknown, rate_draws=rates, total_draws=totals,
        ))
    n_rookie = sum(p.rookie for p in out)
    if n_rookie:
        log.info("%d hold-out players were not in the fit data; they start non-elite", n_rookie)
    return out


def strawman(targets: Sequence[TargetSeason], d: Dataset) -> dict[str, float]:
    """Last observed season's home runs as the forecast; NaN for players without one."""
    out = {}
    for t in targets:
        prev = [s for s in d.player_seasons(t.player_id) if s.year < t.year] if t.player_id in d else []
        out[t.player_id] = float(prev[-1].hr) if prev else float("nan")
    return out


@dataclass(frozen=True)
class MethodScore:
    rmse: float
    mae: float
    coverage: float | None
    avg_width: float | None
    pct_best: float
    n: int


@dataclass
class ValidationReport:
    cohort: str
    scores: dict[str, MethodScore]
    n_players: int
    dropped: dict[str, list[str]] = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = []
        for name, s in self.scores.items():
            out.append({
                "cohort": self.cohort, "method": name, "n": s.n, "rmse": s.rmse, "mae": s.mae,
                "coverage": s.coverage, "avg_width": s.avg_width, "pct_best": s.pct_best,
            })
        return out


def _truth_map(truths) -> dict[str, tuple[float, int]]:
    if isinstance(truths, Mapping):
        return {k: (float(v[0]), int(v[1])) if isinstance(v, tuple) else (float(v), 0) for k, v in truths.items()}
    return {t.player_id: (float(t.hr), int(t.ab)) for t in truths}


def score(predictions, truths, competing: Mapping[str, Mapping[str, float]] | None = None,
          competing_kind: Mapping[str, str] | str = "total", cohort: str = "all") -> ValidationReport:
    """Accuracy of predictive means and intervals against observed totals.

    ``predictions`` is a list of :class:`PredictiveSummary` (method ``"model"``)
    or a mapping from method name to such a list. ``competing`` adds point
    forecasts keyed by player; a ``"rate"`` kind is multiplied by the true
    at-bats. NaN point forecasts drop that player from that method. The
    share of players best predicted (``pct_best``) only counts players every
    method forecasts; ties split the credit equally.
    """
    if not isinstance(predictions, Mapping):
        predictions = {"model": predictions}
    truth = _truth_map(truths)
    competing = dict(competing or {})
    if isinstance(competing_kind, str):
        competing_kind = {k: competing_kind for k in competing}

    point: dict[str, dict[str, float]] = {}
    intervals: dict[str, dict[str, tuple[int, int]]] = {}
    for name, preds in predictions.items():
        ids = [p.player_id for p in preds]
        missing, extra = set(truth) - set(ids), set(ids) - set(truth)
        if missing or extra:
            raise ValueError(
                f"method {name!r} does not match the truths: missing {sorted(missing)[:10]}, "
                f"unexpected {sorted(extra)[:10]}")
        point[name] = {p.player_id: p.mean_total for p in preds}
        intervals[name] = {p.player_id: p.interval for p in preds}
    for name, vals in competing.items():
        extra = set(vals) - set(truth)
        if extra:
            raise ValueError(f"method {name!r} forecasts players without truths: {sorted(extra)[:10]}")
        kind = competing_kind.get(name, "total")
        if kind not in ("rate", "total"):
            raise ValueError(f"competing kind must be 'rate' or 'total', got {kind!r}")
        conv = {}
        for pid in truth:
            v = float(vals.get(pid, float("nan")))
            conv[pid] = v * truth[pid][1] if kind == "rate" else v
        point[name] = conv

    players = sorted(truth)
    methods = list(point)
    dropped = {m: [p for p in players if not np.isfinite(point[m][p])] for m in methods}
    dropped = {m: v for m, v in dropped.items() if v}
    common = [p for p in players if all(np.isfinite(point[m][p]) for m in methods)]
    best = dict.fromkeys(methods, 0.0)
    for p in common:
        errs = np.array([abs(point[m][p] - truth[p][0]) for m in methods])
        tied = np.flatnonzero(np.isclose(errs, errs.min(), rtol=0.0, atol=1e-9))
        for j in tied:
            best[methods[j]] += 1.0 / tied.size

    scores = {}
    for m in methods:
        ok = [p for p in players if np.isfinite(point[m][p])]
        err = np.array([point[m][p] - truth[p][0] for p in ok])
        if m in intervals:
            iv = np.array([intervals[m][p] for p in ok]).reshape(-1, 2)
            y = np.array([truth[p][0] for p in ok])
            cov = float(np.mean((iv[:, 0] <= y) & (y <= iv[:, 1]))) if ok else float("nan")
            width = float(np.mean(iv[:, 1] - iv[:, 0])) if ok else float("nan")
        else:
            cov = width = None
        scores[m] = MethodScore(
            rmse=float(np.sqrt(np.mean(err**2))) if ok else float("nan"),
            mae=float(np.median(np.abs(err))) if ok else float("nan"),
            coverage=cov, avg_width=width,
            pct_best=100.0 * best[m] / len(common) if common else float("nan"),
            n=len(ok),
        )
    return ValidationReport(cohort=cohort, scores=scores, n_players=len(players), dropped=dropped)


def score_cohorts(predictions, truths: Sequence[TargetSeason], competing=None, competing_kind="total",
                  cutoff: int = 26) -> list[ValidationReport]:
    """Reports for all players, players aged ``<= cutoff`` and players older."""
    from .data import split_by_age

    young, old = split_by_age(list(truths), cutoff)
    out = []
    for name, group in (("all", list(truths)), ("young", young), ("old", old)):
        if not group:
            continue
        ids = {t.player_id for t in group}
        preds = predictions if isinstance(predictions, Mapping) else {"model": predictions}
        sub = {m: [p for p in ps if p.player_id in ids] for m, ps in preds.items()}
        comp = {m: {k: v for k, v in c.items() if k in ids} for m, c in (competing or {}).items()}
        out.append(score(sub, group, comp, competing_kind, cohort=name))
    return out


def elite_probabilities(chains) -> np.ndarray:
    """Posterior P(elite) of every fitted player-season."""
    store = as_store(chains)
    return store.elite.mean(axis=0) if store.n_draws else np.zeros(store.elite.shape[1])


def elite_onset(chains, threshold: float = ONSET_THRESHOLD, min_elite_years: int = 2) -> dict[int, int]:
    """Histogram of the career year in which elite status is first inferred.

    Only players with posterior elite probability at least ``threshold`` in
    at least ``min_elite_years`` seasons count. Keys are 1-based career years.
    """
    store = as_store(chains)
    prob = elite_probabilities(store)
    offsets = store.layout["offsets"]
    hist: Counter = Counter()
    for i in range(len(offsets) - 1):
        p = prob[offsets[i]:offsets[i + 1]]
        hit = np.flatnonzero(p >= threshold)
        if hit.size >= min_elite_years:
            hist[int(hit[0]) + 1] += 1
    return dict(sorted(hist.items()))


def _draw_indices(n_draws: int, n: int | None) -> np.ndarray:
    if n is None or n >= n_draws:
        return np.arange(n_draws)
    return np.unique(np.linspace(0, n_draws - 1, n).round().astype(np.int64))


def age_curves(chains, position: str, elite: bool, park: str | None = None, n_curves: int = 100,
               grid: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Home-run rate against age for evenly spaced stored draws.

    The park effect is zero unless ``park`` names a fitted park. Returns
    ``(grid, curves)`` with one row per selected draw.
    """
    store = as_store(chains)
    h = store.hyperparams()
    labels = list(store.layout["groups"])
    if position not in labels:
        raise ValueError(f"unknown position {position!r}; expected one of {labels}")
    k = labels.index(position)
    e = 1 if (elite and h.n_states == 2) else 0
    if grid is None:
        grid = np.arange(math.ceil(h.age_lo), math.floor(h.age_hi) + 1, 0.25)
    grid = np.asarray(grid, dtype=np.float64)
    idx = _draw_indices(store.n_draws, n_curves)
    beta = np.zeros(idx.size)
    if park is not None:
        parks = store.layout["parks"]
        if park not in parks:
            raise ValueError(f"unknown park {park!r}")
        beta = store.beta[idx, parks.index(park)]
    basis = h.centered_basis(grid)
    eta = store.alpha[idx, k, e][:, None] + beta[:, None] + store.gamma[idx, k, :] @ basis.T
    return grid, expit(eta)


@dataclass(frozen=True)
class InterceptRow:
    position: str
    elite: int
    mean: float
    lo: float
    hi: float


def intercept_summary(chains, age: float = 23.0, level: float = 0.95) -> list[InterceptRow]:
    """Rate at ``age`` with zero park effect per position and status: mean and central interval."""
    store = as_store(chains)
    h = store.hyperparams()
    cb = h.centered_basis(float(age))
    q = (0.5 - level / 2, 0.5 + level / 2)
    out = []
    for k, label in enumerate(store.layout["groups"]):
        f = store.gamma[:, k, :] @ cb
        for e in range(store.alpha.shape[2]):
            theta = expit(store.alpha[:, k, e] + f)
            lo, hi = np.quantile(theta, q) if theta.size else (np.nan, np.nan)
            out.append(InterceptRow(label, e, float(np.mean(theta)), float(lo), float(hi)))
    return out


@dataclass(frozen=True)
class Contribution:
    player_id: str
    contribution: float
    model_rate: float
    naive_rate: float
    age: int
    past_rate_sd: float
    n_past: int


def model_contribution(predictions: Sequence[PredictiveSummary], d: Dataset) -> tuple[list[Contribution], list[str]]:
    """Model rate forecast minus last season's observed rate, with the player's age and
    the spread of their past rates. Returns the rows and the players skipped for
    lack of a previous season with at-bats."""
    rows, skipped = [], []
    for p in predictions:
        past = [s for s in d.player_seasons(p.player_id) if s.year < p.year and s.ab > 0] if p.player_id in d else []
        if not past:
            skipped.append(p.player_id)
            continue
        rates = np.array([s.hr / s.ab for s in past])
        naive = float(rates[-1])
        rows.append(Contribution(
            player_id=p.player_id, contribution=p.mean_rate - naive, model_rate=p.mean_rate,
            naive_rate=naive, age=p.age, past_rate_sd=float(rates.std(ddof=1)) if rates.size > 1 else float("nan"),
            n_past=len(past),
        ))
    return rows, skipped


def position_label(index: int) -> str:
    return POSITIONS[index]
