import numpy as np
import pytest
from scipy.special import logit

from hrhmm.data import build_dataset
from hrhmm.model import Hyperparams, ModelState, build_design, linear_predictor
from hrhmm.sampler import _kernels as K
from hrhmm.sampler.mh import adapt_scales, block_rows, mh_update_coefficient, mle_center


def _setup(rows):
    d = build_dataset(rows)
    h = Hyperparams().resolve(d)
    x = build_design(d, h)
    st = ModelState(np.tile([-3.0, -2.0], (9, 1)), np.zeros(d.n_parks), np.zeros((9, 4)),
                    np.tile([0.9, 0.1, 0.2, 0.8], (9, 1)), np.zeros(x.n_rows, dtype=np.int8))
    return d, h, x, st


def test_single_season_intercept_center_is_logit_rate():
    _, _, x, st = _setup([("a", 1990, 5, 100, 25, "X", 0)])
    assert mle_center(("alpha", 0, 0), st, x) == pytest.approx(logit(0.05), abs=1e-9)


def test_identical_seasons_give_same_center():
    _, _, x1, st1 = _setup([("a", 1990, 7, 130, 25, "X", 3)])
    _, _, x2, st2 = _setup([("a", 1990, 7, 130, 25, "X", 3), ("a", 1991, 7, 130, 25, "X", 3)])
    assert mle_center(("alpha", 3, 0), st1, x1) == pytest.approx(mle_center(("alpha", 3, 0), st2, x2), abs=1e-9)


def test_no_home_runs_center_at_half_count_floor():
    _, _, x, st = _setup([("a", 1990, 0, 150, 25, "X", 0), ("b", 1990, 0, 250, 27, "X", 0)])
    assert mle_center(("alpha", 0, 0), st, x) == pytest.approx(logit(1 / (2 * 400)), abs=1e-7)


def test_all_home_runs_center_is_finite_and_mirrored():
    _, _, x, st = _setup([("a", 1990, 20, 20, 25, "X", 0)])
    assert mle_center(("alpha", 0, 0), st, x) == pytest.approx(-logit(1 / 40), abs=1e-7)


def test_center_has_tiny_score(small_design, small_truth):
    x = small_design
    st = small_truth.state.copy()
    st.elite = np.zeros(x.n_rows, dtype=np.int8)
    eta = linear_predictor(st, x)
    for block in [("beta", 0), ("gamma", 2, 1), ("alpha", 4, 0)]:
        c = mle_center(block, st, x, eta)
        rows, w, cur, _, _ = block_rows(block, st, x)
        off = eta[rows] - w * cur
        g, _ = K._grad_hess(x.y[rows], x.m[rows], off, w, c)
        assert abs(g) < 1e-8


def test_bisection_fallback_finds_root():
    y = np.array([3.0, 40.0]); m = np.array([100.0, 50.0]); w = np.array([1.0, -1.0]); off = np.zeros(2)
    # a huge starting point defeats nothing, but max_iter=0 forces the bisection branch
    c, h, status, _ = K.newton_center(y, m, off, w, 5.0, 1e-10, 0)
    assert status == K.BISECTION
    g, _ = K._grad_hess(y, m, off, w, c)
    assert abs(g) < 1e-8


def test_proposal_equal_to_current_value_is_accepted():
    _, _, x, st = _setup([("a", 1990, 5, 100, 25, "X", 0)])
    st.alpha[0, 0] = mle_center(("alpha", 0, 0), st, x)
    eta = linear_predictor(st, x)
    rows = np.array([0]); w = np.ones(1)
    # z = 0 proposes the centre, which is the current value, so the log ratio is zero
    value, acc, center, *_ = K.mh_coefficient(x.y, x.m, eta.copy(), rows, w, st.alpha[0, 0], 1e4, 1.0,
                                              -np.inf, np.inf, 0.0, -1e-12, 1e-10, 50, False)
    assert acc and value == pytest.approx(center, abs=1e-12)


def test_ordering_violation_rejected():
    _, h, x, st = _setup([("a", 1990, 30, 100, 25, "X", 0)])
    st.alpha[0] = [-3.0, -2.9]   # elite intercept just above; the MLE of the non-elite one is ~ -0.85
    rng = np.random.default_rng(0)
    for _ in range(20):
        new, acc = mh_update_coefficient(("alpha", 0, 0), st, x, h, rng)
        assert new.alpha[0, 0] < new.alpha[0, 1]
        assert not acc


def test_update_keeps_eta_consistent(small_design, small_truth):
    x = small_design
    st = small_truth.state.copy()
    st.elite = np.zeros(x.n_rows, dtype=np.int8)
    eta = linear_predictor(st, x)
    rows, w, c, lo, hi = block_rows(("gamma", 1, 2), st, x)
    e2 = eta.copy()
    val, acc, *_ = K.mh_coefficient(x.y, x.m, e2, rows, w, c, 1e4, 1.0, lo, hi, 0.3, -5.0, 1e-10, 50, False)
    st.gamma[1, 2] = val
    np.testing.assert_allclose(e2, linear_predictor(st, x), atol=1e-12)


def test_empty_alpha_block_is_left_alone():
    _, h, x, st = _setup([("a", 1990, 5, 100, 25, "X", 0)])
    new, acc = mh_update_coefficient(("alpha", 0, 1), st, x, h, np.random.default_rng(1))
    assert not acc and new.alpha[0, 1] == st.alpha[0, 1]


def test_empty_park_block_draws_from_prior():
    y = np.zeros(0); rows = np.zeros(0, dtype=np.int64)
    vals = []
    rng = np.random.default_rng(3)
    c = 0.0
    for _ in range(4000):
        c, *_ = K.mh_coefficient(y, y, y.copy(), rows, y, c, 4.0, 1.0, -np.inf, np.inf,
                                 rng.standard_normal(), np.log(rng.random()), 1e-10, 50, False)
        vals.append(c)
    assert np.mean(vals) == pytest.approx(0.0, abs=0.1)
    assert np.var(vals) == pytest.approx(4.0, rel=0.1)


@pytest.mark.parametrize("rate,expected", [(0.9, 1.25), (0.05, 0.8), (0.3, 1.0), (np.nan, 1.0)])
def test_adapt_direction(rate, expected):
    assert adapt_scales(np.array([1.0]), np.array([rate]))[0] == pytest.approx(expected)
