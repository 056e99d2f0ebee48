import numpy as np
import pytest

from hrhmm.model import NO_POSITION, Hyperparams
from hrhmm.sampler import (SamplerConfig, chain_rhat, gelman_rubin, pooled, read_chain, run_chain,
                           run_gibbs, write_chain)
from hrhmm.sampler.store import dumps_chain

QUICK = dict(n_chains=2, n_iter=60, burn_in=20, thin=4, seed=5, adapt_window=10)


@pytest.fixture(scope="module")
def quick_fit(small_data):
    d, _ = small_data
    return run_gibbs(d, Hyperparams(), SamplerConfig(**QUICK))


def test_stored_draw_count(quick_fit, small_data):
    d, _ = small_data
    assert len(quick_fit) == 2
    for c in quick_fit:
        assert c.n_draws == (60 - 20) // 4
        assert c.elite.shape == (10, d.n_seasons)


def test_burn_in_equal_to_iterations_stores_nothing(small_data):
    d, _ = small_data
    cfg = SamplerConfig(n_chains=1, n_iter=10, burn_in=10, thin=1, seed=1)
    assert cfg.n_stored == 0
    (c,) = run_gibbs(d, Hyperparams(), cfg)
    assert c.n_draws == 0


@pytest.mark.parametrize("bad", [dict(burn_in=-1), dict(burn_in=100, n_iter=50), dict(thin=0),
                                 dict(n_chains=0), dict(target_accept=(0.6, 0.5))])
def test_invalid_config_rejected(bad):
    with pytest.raises(ValueError):
        SamplerConfig(**bad)


def test_draws_are_canonical_and_valid(quick_fit):
    h = quick_fit[0].hyperparams()
    for c in quick_fit:
        np.testing.assert_allclose(c.beta.mean(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(c.gamma @ h.ref_weights, 0.0, atol=1e-12)
        assert np.all(c.alpha[:, :, 0] < c.alpha[:, :, 1])
        np.testing.assert_allclose(c.nu[:, :, 0] + c.nu[:, :, 1], 1.0)


def test_chains_use_distinct_streams(quick_fit):
    assert not np.array_equal(quick_fit[0].alpha, quick_fit[1].alpha)


def test_same_seed_same_draws(quick_fit, small_data):
    d, _ = small_data
    again = run_gibbs(d, Hyperparams(), SamplerConfig(**QUICK))
    for a, b in zip(quick_fit, again):
        assert dumps_chain(a) == dumps_chain(b)


def test_single_chain_matches_its_slot_in_a_multi_chain_run(quick_fit, small_data):
    d, _ = small_data
    one = run_chain(d, Hyperparams(), SamplerConfig(**QUICK), chain=1)
    assert dumps_chain(one) == dumps_chain(quick_fit[1])


def test_chain_file_round_trip(quick_fit, tmp_path):
    c = quick_fit[0]
    c.tags = {"config": "abc"}
    path = tmp_path / "chain.csv"
    write_chain(c, path)
    back = read_chain(path)
    for attr in ("alpha", "beta", "gamma", "nu", "elite"):
        np.testing.assert_array_equal(getattr(back, attr), getattr(c, attr))
    assert back.layout == c.layout and back.tags == {"config": "abc"}
    assert dumps_chain(back) == dumps_chain(c)


def test_read_rejects_other_files(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_chain(p)


def test_pooled_concatenates(quick_fit):
    p = pooled(quick_fit)
    assert p.n_draws == sum(c.n_draws for c in quick_fit)


def test_acceptance_rates_recorded(quick_fit):
    for rates in quick_fit[0].acceptance.values():
        finite = rates[np.isfinite(rates)]
        assert np.all((finite >= 0) & (finite <= 1))


def test_reduced_variant_has_one_state(small_data):
    d, _ = small_data
    (c,) = run_gibbs(d, Hyperparams(variant=NO_POSITION), SamplerConfig(n_chains=1, n_iter=20, burn_in=10, thin=2))
    assert c.alpha.shape[1:] == (1, 1)
    assert not c.elite.any()


def test_empty_dataset_rejected():
    from hrhmm.data import build_dataset
    with pytest.raises(ValueError):
        run_gibbs(build_dataset([]), Hyperparams(), SamplerConfig(n_iter=2, burn_in=0))


def test_gelman_rubin_identical_chains_near_one():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 5000))
    assert gelman_rubin(x) == pytest.approx(1.0, abs=0.01)


def test_gelman_rubin_separated_chains_large():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 500)) + np.array([[0.0], [5.0], [10.0]])
    assert gelman_rubin(x) > 3


def test_gelman_rubin_hand_computed():
    x = np.array([[1.0, 2.0, 3.0], [2.0, 3.0, 4.0]])
    within, between_over_n = 1.0, 0.5
    expected = np.sqrt((2 / 3 * within + between_over_n) / within)
    assert gelman_rubin(x) == pytest.approx(expected)


def test_gelman_rubin_constant_cases():
    assert gelman_rubin(np.ones((2, 4))) == 1.0
    assert gelman_rubin(np.array([[1.0] * 4, [2.0] * 4])) == np.inf
    with pytest.raises(ValueError):
        gelman_rubin(np.ones((1, 4)))


def test_chain_rhat_by_name(quick_fit):
    names, values = chain_rhat(quick_fit)
    assert len(names) == values.size
    assert chain_rhat(quick_fit, names[0]) == pytest.approx(values[0])
    with pytest.raises(KeyError):
        chain_rhat(quick_fit, "nope")
    with pytest.raises(ValueError):
        chain_rhat(quick_fit[:1])
