import numpy as np
import pytest
from scipy import stats

from hrhmm import synth
from hrhmm.data import POSITIONS
from hrhmm.model import Hyperparams, ModelState


def test_quadrature_standard_normal():
    mean, var = synth.quadrature_posterior_1d(lambda v: -0.5 * v * v, -12, 12)
    assert mean == pytest.approx(0.0, abs=1e-8)
    assert var == pytest.approx(1.0, abs=1e-8)


def test_quadrature_beta_shape():
    mean, var = synth.quadrature_posterior_1d(lambda v: np.log(v) + 4 * np.log1p(-v) if 0 < v < 1 else -np.inf,
                                              0.0, 1.0, edge_tol=1.0)
    assert mean == pytest.approx(2 / 7, abs=1e-8)
    assert var == pytest.approx(stats.beta(2, 5).var(), abs=1e-8)


def test_quadrature_narrow_bounds_raise():
    with pytest.raises(synth.OracleError):
        synth.quadrature_posterior_1d(lambda v: -0.5 * v * v, -1, 1)


def test_no_entry_to_elite_simulates_nonelite_paths(small_truth):
    st = small_truth.state.copy()
    st.nu[:, 0], st.nu[:, 1] = 1.0, 0.0
    _, elite = synth.simulate(synth.TrueParams(st, small_truth.hyper, small_truth.parks, small_truth.schedules),
                              np.random.default_rng(0))
    assert not elite.any()


def test_zero_rate_gives_zero_home_runs(small_truth):
    st = small_truth.state.copy()
    st.alpha[:] = [-800.0, -700.0]
    d, _ = synth.simulate(synth.TrueParams(st, small_truth.hyper, small_truth.parks, small_truth.schedules),
                          np.random.default_rng(0))
    assert not d.columns["hr"].any()


def test_simulated_rate_law_of_large_numbers():
    h = Hyperparams(age_lo=20, age_hi=40, ref_age=30)
    L = h.basis.n_basis
    target = np.log(0.05 / 0.95)
    st = ModelState(np.tile([target, target + 1e-9], (9, 1)), np.zeros(1), np.zeros((9, L)),
                          np.tile([1.0, 0.0, 0.0, 1.0], (9, 1)), np.zeros(0, dtype=np.int8))
    sched = tuple(synth.Schedule(f"p{i}", (2000,), (30,), ("X",), (0,), (1000,)) for i in range(1000))
    d, _ = synth.simulate(synth.TrueParams(st, h, ("X",), sched), np.random.default_rng(1))
    n = 10**6
    rate = d.columns["hr"].sum() / n
    assert abs(rate - 0.05) <= 3 * np.sqrt(0.05 * 0.95 / n)


def test_default_truth_shape():
    tp = synth.default_true_params(np.random.default_rng(0), n_players=30, n_seasons=4)
    assert len(tp.schedules) == 30 and all(len(s.years) == 4 for s in tp.schedules)
    assert tp.state.alpha.shape == (len(POSITIONS), 2)
    assert np.all(tp.state.alpha[:, 0] < tp.state.alpha[:, 1])
    for s in tp.schedules:
        assert all(200 <= m <= 600 for m in s.ab) and 22 <= s.ages[0] <= 28


def test_truth_ordering_is_enforced(small_truth):
    st = small_truth.state.copy()
    st.alpha[0] = [0.0, -1.0]
    with pytest.raises(ValueError):
        synth.TrueParams(st, small_truth.hyper, small_truth.parks, small_truth.schedules)


def test_extend_and_split(small_truth):
    ext = synth.extend_schedules(small_truth, np.random.default_rng(0))
    d, _ = synth.simulate(ext, np.random.default_rng(1))
    train, hold = synth.split_last_season(d)
    assert len(hold) == len(small_truth.schedules)
    assert train.n_seasons == d.n_seasons - len(hold)
    assert all(t.year == small_truth.schedules[0].years[-1] + 1 for t in hold)


def test_enumeration_single_season_two_point():
    loglik = np.log([[0.3, 0.6]])
    paths, probs = synth.enumerate_paths(loglik, np.array([[0.7, 0.3, 0.5, 0.5]]))
    np.testing.assert_allclose(probs[paths[:, 0] == 1], 0.3 * 0.6 / (0.7 * 0.3 + 0.3 * 0.6))


def test_enumeration_uniform_likelihood_is_markov_chain():
    trans = np.tile([0.8, 0.2, 0.4, 0.6], (3, 1))
    paths, probs = synth.enumerate_paths(np.zeros((3, 2)), trans)
    for path, p in zip(paths, probs):
        prev, expected = 0, 1.0
        for e in path:
            expected *= trans[0, 2 * prev + e]
            prev = e
        assert p == pytest.approx(expected, abs=1e-14)
    assert probs.sum() == pytest.approx(1.0, abs=1e-14)


def test_enumeration_rejects_long_careers():
    with pytest.raises(ValueError):
        synth.enumerate_paths(np.zeros((21, 2)), np.tile([0.5] * 4, (21, 1)))


def test_enumerated_marginals_sum_to_one(small_data, small_truth):
    d, _ = small_data
    seasons = d.player_seasons(d.player_ids[0])
    _, probs, filt, sm = synth.enumerate_elite_posterior(seasons, small_truth.state, small_truth.hyper)
    assert probs.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(filt.sum(axis=1), 1.0)
    np.testing.assert_allclose(sm.sum(axis=1), 1.0)


def test_prior_draw_respects_ordering():
    h = Hyperparams(tau2=1.0, age_lo=20, age_hi=40, ref_age=30)
    st = synth.draw_prior_state(h, 3, 5, np.random.default_rng(0))
    assert np.all(st.alpha[:, 0] < st.alpha[:, 1])
    np.testing.assert_allclose(st.nu[:, 0] + st.nu[:, 1], 1.0)


def test_geweke_quick_run_shapes():
    sched = synth.geweke_schedules(np.random.default_rng(0))
    draws = synth.geweke_draws(sched, n_replicates=4, n_rounds=2, seed=1)
    assert draws["alpha"].shape == (4, 9, 2)
    p = synth.geweke_pvalues(draws)
    assert all(0 <= v <= 1 for v in p.values())
