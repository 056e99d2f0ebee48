"""Metropolis-within-Gibbs sampler for the full posterior.

One sweep updates, in order: intercepts by position, park effects by park,
spline coefficients by position then basis index (each by an independence
MH step centred at the conditional MLE), then the two exact moves along the
directions the likelihood cannot see, then the transition rows (conjugate
Dirichlet draws), then every player's elite path (FFBS).
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .. import pshmm
from ..data import Dataset
from ..errors import SamplerError
from ..model import PSHMM, Design, Hyperparams, ModelState, build_design, canonicalize, linear_predictor
from . import _kernels as K
from .ffbs import base_predictor, ffbs_all
from .mh import NEWTON_MAX_ITER, NEWTON_TOL, adapt_scales
from .store import ChainStore
from .transitions import sample_transitions

log = logging.getLogger(__name__)

INIT_NU = (0.9, 0.1, 0.2, 0.8)


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 3
    n_iter: int = 9000
    burn_in: int = 1000
    thin: int = 8
    seed: int = 20080101
    adapt_window: int = 50
    target_accept: tuple[float, float] = (0.2, 0.5)
    adapt_factor: float = 1.25
    init_scale: float = 1.0
    jitter: float = 0.1
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "target_accept", tuple(float(v) for v in self.target_accept))
        if self.n_chains < 1:
            raise ValueError("n_chains must be at least 1")
        if not 0 <= self.burn_in <= self.n_iter:
            raise ValueError("burn_in must lie in [0, n_iter]")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        lo, hi = self.target_accept
        if not 0 < lo < hi < 1:
            raise ValueError("target acceptance range must satisfy 0 < lo < hi < 1")
        if self.adapt_window < 1:
            raise ValueError("adapt_window must be at least 1")

    @property
    def n_stored(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin

    def to_dict(self) -> dict:
        """Settings that affect the draws; the worker count does not and is left out."""
        d = asdict(self)
        d["target_accept"] = list(self.target_accept)
        del d["n_jobs"]
        return d


def initial_state(x: Design, rng: np.random.Generator, jitter: float = 0.0) -> ModelState:
    """Empirical logit rate per position for the non-elite intercept, elite one unit above;
    park and spline effects at zero; every player non-elite."""
    h = x.hyper
    G, S, L = h.n_groups, h.n_states, h.basis.n_basis
    overall = (x.y.sum() + 0.5) / (x.m.sum() + 1.0)
    alpha = np.zeros((G, S))
    for k in range(G):
        sel = x.group == k
        r = (x.y[sel].sum() + 0.5) / (x.m[sel].sum() + 1.0) if sel.any() else overall
        alpha[k, 0] = np.log(r / (1 - r))
    if S == 2:
        alpha[:, 1] = alpha[:, 0] + 1.0
    nu = np.tile(np.asarray(INIT_NU, dtype=float), (G, 1))
    if jitter > 0:
        alpha += rng.normal(0.0, jitter, size=alpha.shape)
        alpha.sort(axis=1)
        d = rng.uniform(-0.5 * jitter, 0.5 * jitter, size=(G, 2))
        nu[:, 0] += d[:, 0]
        nu[:, 1] = 1.0 - nu[:, 0]
        nu[:, 3] += d[:, 1]
        nu[:, 2] = 1.0 - nu[:, 3]
    state = ModelState(
        alpha=alpha,
        beta=np.zeros(x.n_parks),
        gamma=np.zeros((G, L)),
        nu=nu,
        elite=np.zeros(x.n_rows, dtype=np.int8),
    )
    if h.variant == PSHMM:
        state.nu_player = nu[x.player_group].copy()
        state.omega = np.ones((G, 4))
    return state


class GibbsChain:
    """One chain's sampler state plus proposal tuning and acceptance bookkeeping."""

    def __init__(self, x: Design, config: SamplerConfig, rng: np.random.Generator,
                 state: ModelState | None = None, fixed_omega: np.ndarray | None = None):
        self.x = x
        self.h = x.hyper
        self.config = config
        self.rng = rng
        self.state = state.copy() if state is not None else initial_state(x, rng, config.jitter)
        h = self.h
        G, S, L, P = h.n_groups, h.n_states, h.basis.n_basis, x.n_parks
        self.rows_group = [np.flatnonzero(x.group == k) for k in range(G)]
        self.rows_park = [np.flatnonzero(x.park == b) for b in range(P)]
        self.gamma_w = [[np.ascontiguousarray(x.basis[r, l]) for l in range(L)] for r in self.rows_group]
        self.ones = np.ones(max(x.n_rows, 1))
        self.scale = {
            "alpha": np.full((G, S), config.init_scale),
            "beta": np.full(P, config.init_scale),
            "gamma": np.full((G, L), config.init_scale),
        }
        if h.variant == PSHMM:
            self.scale["omega"] = np.ones((G, 2))
        self._reset_counts()
        self.total_prop = {k: np.zeros_like(v) for k, v in self.scale.items()}
        self.total_acc = {k: np.zeros_like(v) for k, v in self.scale.items()}
        self.fallbacks = 0
        self.fixed_omega = None
        if fixed_omega is not None:
            self.fixed_omega = np.broadcast_to(np.asarray(fixed_omega, dtype=float), (G, 4)).copy()
            self.state.omega = self.fixed_omega.copy()
        self.omega_edge: set[int] = set()
        self.eta = linear_predictor(self.state, x)

    def _reset_counts(self):
        self.win_prop = {k: np.zeros_like(v) for k, v in self.scale.items()}
        self.win_acc = {k: np.zeros_like(v) for k, v in self.scale.items()}

    def _record(self, kind, idx, accepted, status, count):
        if status == K.FALLBACK:
            self.fallbacks += 1
        if status == K.NO_INFO and kind == "alpha":
            return  # no proposal was made
        self.win_prop[kind][idx] += 1
        self.win_acc[kind][idx] += accepted
        if count:
            self.total_prop[kind][idx] += 1
            self.total_acc[kind][idx] += accepted

    def _mh(self, rows, w, value, scale, lo, hi, z, logu, skip_empty):
        return K.mh_coefficient(
            self.x.y, self.x.m, self.eta, rows, w, value, self.h.tau2, scale, lo, hi, z, logu,
            NEWTON_TOL, NEWTON_MAX_ITER, skip_empty,
        )

    def sweep(self, count: bool = True) -> None:
        x, h, st, rng = self.x, self.h, self.state, self.rng
        G, S, L, P = h.n_groups, h.n_states, h.basis.n_basis, x.n_parks
        n_coef = G * S + P + G * L
        z = rng.standard_normal(n_coef)
        logu = np.log(rng.random(n_coef))
        i = 0

        for k in range(G):
            rk = self.rows_group[k]
            el = st.elite[rk] if S == 2 else None
            for e in range(S):
                rows = rk[el == e] if S == 2 else rk
                lo = st.alpha[k, 0] if (S == 2 and e == 1) else -np.inf
                hi = st.alpha[k, 1] if (S == 2 and e == 0) else np.inf
                val, acc, _, _, status = self._mh(
                    rows, self.ones[: rows.size], st.alpha[k, e], self.scale["alpha"][k, e],
                    lo, hi, z[i], logu[i], True)
                st.alpha[k, e] = val
                self._record("alpha", (k, e), acc, status, count)
                i += 1

        for b in range(P):
            rows = self.rows_park[b]
            val, acc, _, _, status = self._mh(
                rows, self.ones[: rows.size], st.beta[b], self.scale["beta"][b],
                -np.inf, np.inf, z[i], logu[i], False)
            st.beta[b] = val
            self._record("beta", b, acc, status, count)
            i += 1

        for k in range(G):
            rows = self.rows_group[k]
            for l in range(L):
                val, acc, _, _, status = self._mh(
                    rows, self.gamma_w[k][l], st.gamma[k, l], self.scale["gamma"][k, l],
                    -np.inf, np.inf, z[i], logu[i], False)
                st.gamma[k, l] = val
                self._record("gamma", (k, l), acc, status, count)
                i += 1

        self._ridge_moves()

        if S == 2:
            if h.variant == PSHMM:
                st.nu_player = pshmm.sample_player_transitions(st.elite, x, st.omega, rng)
                if self.fixed_omega is None:
                    acc = pshmm.update_hyper(st, x, self.scale["omega"], rng)
                    for k in range(G):
                        for a in range(2):
                            if acc[k, a] >= 0:
                                self._record("omega", (k, a), bool(acc[k, a]), K.NEWTON, count)
                    self.omega_edge.update(pshmm.at_bounds(st.omega).tolist())
                st.nu = pshmm.group_means(st.omega)
            else:
                st.nu = sample_transitions(st.elite, x, h.omega, rng)
            base = base_predictor(st, x)
            st.elite = ffbs_all(x, st, rng.random(x.n_rows), base=base)
            self.eta = base + st.alpha[x.group, st.elite.astype(np.int64)]
        else:
            self.eta = linear_predictor(st, x)

    def _ridge_moves(self) -> None:
        """Exact Gibbs draws along the likelihood-flat directions.

        Adding ``c`` to every park effect and ``-c`` to every intercept, or a
        constant to one position's spline coefficients, leaves all rates
        unchanged, so the conditional of ``c`` is Gaussian from the prior alone.
        """
        st, h, rng = self.state, self.h, self.rng
        G, L = st.gamma.shape
        z = rng.standard_normal(1 + G)
        n = st.beta.size + st.alpha.size
        mean = (st.alpha.sum() - st.beta.sum()) / n
        c = mean + np.sqrt(h.tau2 / n) * z[0]
        st.beta += c
        st.alpha -= c
        for k in range(G):
            st.gamma[k] += -st.gamma[k].mean() + np.sqrt(h.tau2 / L) * z[1 + k]

    def adapt(self) -> None:
        for kind in self.scale:
            with np.errstate(invalid="ignore", divide="ignore"):
                rate = self.win_acc[kind] / self.win_prop[kind]
            self.scale[kind] = adapt_scales(self.scale[kind], rate, self.config.target_accept,
                                            self.config.adapt_factor)
        self._reset_counts()

    def acceptance_rates(self) -> dict[str, np.ndarray]:
        with np.errstate(invalid="ignore", divide="ignore"):
            return {k: self.total_acc[k] / self.total_prop[k] for k in self.scale}


def _layout(d: Dataset, x: Design) -> dict:
    last = x.offsets[1:] - 1
    return {
        "groups": list(x.hyper.group_labels),
        "parks": list(d.parks),
        "players": list(d.player_ids),
        "offsets": x.offsets.tolist(),
        "last_group": x.group[last].tolist() if x.n_rows else [],
        "player_group": x.player_group.tolist(),
        "data_fingerprint": d.fingerprint(),
    }


def run_chain(d: Dataset, h: Hyperparams, config: SamplerConfig, chain: int,
              seed_seq: np.random.SeedSequence | None = None,
              x: Design | None = None, fixed_omega: np.ndarray | None = None) -> ChainStore:
    if seed_seq is None:
        seed_seq = np.random.SeedSequence(config.seed).spawn(config.n_chains)[chain]
    if x is None:
        h = h if h.resolved else h.resolve(d)
        x = build_design(d, h)
    h = x.hyper
    rng = np.random.default_rng(seed_seq)
    sampler = GibbsChain(x, config, rng, fixed_omega=fixed_omega)
    D = config.n_stored
    G, S, L = h.n_groups, h.n_states, h.basis.n_basis
    alpha = np.zeros((D, G, S))
    beta = np.zeros((D, x.n_parks))
    gamma = np.zeros((D, G, L))
    nu = np.zeros((D, G, 4))
    elite = np.zeros((D, x.n_rows), dtype=np.uint8)
    nu_player = np.zeros((D, x.n_players, 4)) if h.variant == PSHMM else None
    omega = np.zeros((D, G, 4)) if h.variant == PSHMM else None
    j = 0
    for it in range(1, config.n_iter + 1):
        try:
            sampler.sweep(count=it > config.burn_in)
        except SamplerError as err:
            raise SamplerError(str(err), iteration=it) from err
        except (FloatingPointError, ValueError, ZeroDivisionError) as err:
            raise SamplerError(f"{type(err).__name__}: {err}", iteration=it) from err
        if it <= config.burn_in:
            if it % config.adapt_window == 0:
                sampler.adapt()
            continue
        if (it - config.burn_in) % config.thin == 0:
            s = canonicalize(sampler.state, h)
            s.check()
            alpha[j], beta[j], gamma[j], nu[j], elite[j] = s.alpha, s.beta, s.gamma, s.nu, s.elite
            if nu_player is not None:
                nu_player[j], omega[j] = s.nu_player, s.omega
            j += 1
    if sampler.fallbacks:
        log.warning("chain %d: %d MLE searches fell back to the current value", chain, sampler.fallbacks)
    if sampler.omega_edge:
        log.warning("chain %d: Dirichlet hyperparameters touched their bounds in groups %s",
                    chain, [h.group_labels[k] for k in sorted(sampler.omega_edge)])
    return ChainStore(
        alpha=alpha, beta=beta, gamma=gamma, nu=nu, elite=elite,
        layout=_layout(d, x), seed=config.seed, chain=chain, config=config.to_dict(),
        hyper=h.to_dict(), acceptance=sampler.acceptance_rates(),
        scales={k: v.copy() for k, v in sampler.scale.items()},
        nu_player=nu_player, omega=omega,
    )


def _run_chain_job(args):
    return run_chain(*args)


def run_gibbs(d: Dataset, h: Hyperparams, config: SamplerConfig,
              fixed_omega: np.ndarray | None = None) -> list[ChainStore]:
    """Run ``config.n_chains`` independent chains.

    Chain ``c`` draws from the ``c``-th child of ``SeedSequence(config.seed)``,
    so results do not depend on ``n_jobs``. ``fixed_omega`` pins the
    Dirichlet parameters of the player-specific variant.
    """
    if d.n_seasons == 0:
        raise ValueError("cannot fit an empty dataset")
    h = h if h.resolved else h.resolve(d)
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    jobs = [(d, h, config, c, seeds[c], None, fixed_omega) for c in range(config.n_chains)]
    if config.n_jobs > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.n_jobs, config.n_chains)) as ex:
            return list(ex.map(_run_chain_job, jobs))
    return [run_chain(*job) for job in jobs]
