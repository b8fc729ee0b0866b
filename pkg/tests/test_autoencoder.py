import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from synthetic import factor_data
from autosynth.autoencoder import (
    AutoencoderModel,
    AutoSynthError,
    TrainConfig,
    TrainingError,
    autosynth_index,
    forward,
    indicator_relevance,
    loss,
    loss_and_gradients,
    train,
)
from autosynth.baselines import ampi_index, pca_index
from autosynth.data import Method, ranks_descending
from autosynth.evaluation import spearman, stress


def random_model(p, h, rng, center=None, scale=None):
    return AutoencoderModel.initialize(p, h, rng, center, scale)


class TestModel:
    def test_layer_dims(self, rng):
        m = random_model(5, 3, rng)
        assert m.layer_dims == [5, 3, 1, 3, 5]

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            AutoencoderModel([np.ones((3, 2)), np.ones((3, 1))], [np.zeros(2), np.zeros(1)],
                             activations=("relu", "linear"))

    def test_bottleneck_must_be_one(self):
        w = [np.ones((2, 2)), np.ones((2, 2))]
        with pytest.raises(ValueError, match="width-1"):
            AutoencoderModel(w, [np.zeros(2), np.zeros(2)], activations=("relu", "linear"))


class TestForward:
    def test_all_zero(self):
        p, h = 4, 2
        dims = [p, h, 1, h, p]
        w = [np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])]
        b = [np.zeros(k) for k in dims[1:]]
        codes, recon = forward(AutoencoderModel(w, b), np.full((3, p), 100.0))
        assert not codes.any() and not recon.any()

    def test_identity_chain(self):
        ones = [np.ones((1, 1))] * 4
        zeros = [np.zeros(1)] * 4
        x = np.array([[3.5], [7.25], [0.5]])
        codes, recon = forward(AutoencoderModel(ones, zeros), x)
        assert np.array_equal(recon, x)
        assert np.array_equal(codes, x[:, 0])

    def test_matches_naive_oracle(self, rng):
        x = rng.uniform(70, 130, size=(3, 2))
        m = random_model(2, 2, rng, center=x.mean(0), scale=x.std(0))
        for b in m.biases:
            b[...] = rng.normal(size=b.shape)
        codes, recon = forward(m, x)
        oc, orec = oracles.naive_forward(
            [w.tolist() for w in m.weights], [b.tolist() for b in m.biases], m.activations,
            m.input_center.tolist(), m.input_scale.tolist(), x.tolist())
        np.testing.assert_allclose(codes, oc, rtol=0, atol=1e-12)
        np.testing.assert_allclose(recon, orec, rtol=0, atol=1e-12)

    def test_wrong_width(self, rng):
        with pytest.raises(ValueError):
            forward(random_model(3, 2, rng), np.ones((4, 5)))


class TestLoss:
    def _identity_model(self, p):
        # linear code layer reproduces p=1 inputs exactly
        return AutoencoderModel([np.ones((1, 1))] * 4, [np.zeros(1)] * 4)

    def test_perfect_reconstruction(self):
        x = np.array([[1.0], [2.0], [3.0]])
        assert loss(self._identity_model(1), x) == 0.0

    def test_unit_offset(self):
        m = AutoencoderModel([np.ones((1, 1))] * 4, [np.zeros(1)] * 3 + [np.ones(1)])
        x = np.array([[1.0], [2.0], [3.0]])
        assert loss(m, x, [1.0]) == 1.0

    def test_matches_double_loop(self, rng):
        x = rng.uniform(70, 130, size=(6, 4))
        m = random_model(4, 2, rng, center=x.mean(0), scale=x.std(0))
        w = rng.dirichlet(np.ones(4))
        _, recon = forward(m, x)
        expected = oracles.weighted_sq_loss(x.tolist(), recon.tolist(), w.tolist())
        assert loss(m, x, w) == pytest.approx(expected, rel=0, abs=1e-12 * max(1, expected))

    def test_uniform_weights_is_mse_over_p(self, rng):
        x = rng.normal(size=(5, 3))
        m = random_model(3, 2, rng)
        _, recon = forward(m, x)
        assert loss(m, x) == pytest.approx(((x - recon) ** 2).mean(), rel=1e-12)


def gradient_check(seed, n=5, p=4, h=2):
    rng = np.random.default_rng(seed)
    x = rng.uniform(70, 130, size=(n, p))
    m = random_model(p, h, rng, center=x.mean(0), scale=x.std(0))
    for b in m.biases:
        b[...] = rng.normal(0, 0.5, size=b.shape)
    w = rng.dirichlet(np.ones(p))
    _, analytic = loss_and_gradients(m, x, w)
    numeric = oracles.finite_difference_gradients(
        lambda: loss_and_gradients(m, x, w)[0], m.parameters(), step=1e-5)
    worst = 0.0
    for a, nmr in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(nmr)), 1e-6)
        worst = max(worst, float((np.abs(a - nmr) / denom).max()))
    return worst


class TestGradients:
    @pytest.mark.parametrize("seed", range(5))
    def test_finite_differences(self, seed):
        assert gradient_check(seed) < 1e-4

    def test_n4_p3(self):
        assert gradient_check(11, n=4, p=3, h=2) < 1e-4


class TestTrain:
    def test_deterministic(self, random_normalized):
        R = random_normalized(20, 4)
        cfg = TrainConfig(seed=3, max_epochs=200)
        a, b = train(R, cfg), train(R, cfg)
        for wa, wb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(wa, wb)

    def test_loss_never_worse_than_start(self, random_normalized):
        R = random_normalized(30, 5)
        for seed in range(5):
            m = train(R, TrainConfig(seed=seed, max_epochs=300))
            assert np.isfinite(m.trace).all()
            assert loss(m, R, R.weights) <= m.trace[0] + 1e-9

    def test_early_stop_on_plateau(self, random_normalized):
        R = random_normalized(20, 4)
        m = train(R, TrainConfig(seed=0, max_epochs=5000, tolerance=1e-2))
        assert len(m.trace) < 5001

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_epoch(self, random_normalized):
        R = random_normalized(20, 4)
        with pytest.raises(TrainingError) as err:
            train(R.values * 1e305, TrainConfig(seed=0, max_epochs=10))
        assert err.value.epoch is not None

    def test_rank_one_near_pca(self):
        R, _ = factor_data(5, n=150, p=6)
        pca_stress = stress(R, pca_index(R)[0])
        res = autosynth_index(R, TrainConfig(seed=1), replications=3)
        assert stress(R, res.index) < pca_stress + 0.02

    @pytest.mark.parametrize("bad", [
        dict(hidden_width=0), dict(learning_rate=0), dict(max_epochs=0),
        dict(tolerance=-1), dict(seed=-1), dict(feature_weights=(0.5, 0.6)),
    ])
    def test_config_validation(self, bad):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


class TestRelevance:
    def test_perfect_is_uniform(self, rng):
        x = rng.normal(size=(5, 4))
        np.testing.assert_array_equal(indicator_relevance(x, x), np.full(4, 0.25))

    def test_one_hot(self, rng):
        x = rng.normal(size=(6, 3))
        recon = x.copy()
        recon[:, 0] += rng.uniform(0.1, 1, 6)
        np.testing.assert_array_equal(indicator_relevance(x, recon), [1.0, 0.0, 0.0])

    def test_matches_oracle(self, rng):
        x = rng.uniform(70, 130, (8, 5))
        recon = x + rng.normal(size=x.shape)
        z = indicator_relevance(x, recon)
        np.testing.assert_allclose(z, oracles.relevance(x.tolist(), recon.tolist()), atol=1e-12)
        assert abs(z.sum() - 1) < 1e-12

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_simplex(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(70, 130, (7, 4))
        recon = x + rng.normal(size=x.shape) * rng.uniform(0, 5, 4)
        z = indicator_relevance(x, recon)
        assert (z >= 0).all() and abs(z.sum() - 1) < 1e-10

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            indicator_relevance(np.ones((3, 2)), np.ones((3, 3)))


class TestAutoSynth:
    def test_single_replication(self, random_normalized):
        R = random_normalized(25, 4)
        cfg = TrainConfig(seed=9, max_epochs=200)
        res = autosynth_index(R, cfg, replications=1)
        assert res.index.method is Method.AUTOSYNTH
        np.testing.assert_array_equal(res.index.values, res.index.ensemble[:, 0])
        assert res.index.values.min() == pytest.approx(70) and res.index.values.max() == pytest.approx(130)

    def test_median_of_ensemble(self, random_normalized):
        R = random_normalized(25, 4)
        res = autosynth_index(R, TrainConfig(seed=2, max_epochs=200), replications=5)
        np.testing.assert_array_equal(res.index.values, np.median(res.index.ensemble, axis=1))
        assert res.index.ensemble.shape == (25, 5)
        assert len(res.losses) == 5
        assert abs(res.relevance.sum() - 1) < 1e-10

    def test_each_member_spans_scale(self, random_normalized):
        R = random_normalized(25, 4)
        res = autosynth_index(R, TrainConfig(seed=4, max_epochs=200), replications=4)
        np.testing.assert_allclose(res.index.ensemble.min(axis=0), 70, atol=1e-12)
        np.testing.assert_allclose(res.index.ensemble.max(axis=0), 130, atol=1e-12)

    def test_seed_determinism(self, random_normalized):
        R = random_normalized(25, 4)
        cfg = TrainConfig(seed=13, max_epochs=150)
        a = autosynth_index(R, cfg, replications=3)
        b = autosynth_index(R, cfg, replications=3)
        assert np.array_equal(a.index.ensemble, b.index.ensemble)
        assert np.array_equal(a.relevance, b.relevance)

    def test_parallel_matches_serial(self, random_normalized):
        R = random_normalized(20, 4)
        cfg = TrainConfig(seed=1, max_epochs=100)
        a = autosynth_index(R, cfg, replications=3)
        b = autosynth_index(R, cfg, replications=3, n_jobs=2)
        assert np.array_equal(a.index.ensemble, b.index.ensemble)

    def test_aligned_with_compass(self, random_normalized):
        R = random_normalized(40, 5)
        compass = ampi_index(R)
        res = autosynth_index(R, TrainConfig(seed=0, max_epochs=200), 3, compass)
        top = int(np.argmax(compass.values))
        cutoff = np.ceil(40 / 4)
        for k in range(3):
            member = res.index.ensemble[:, k]
            if res.flipped[k]:
                assert ranks_descending(200 - member)[top] > cutoff
            else:
                assert ranks_descending(member)[top] <= cutoff

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_failure_budget(self, random_normalized):
        R = random_normalized(10, 3)
        with pytest.raises(AutoSynthError):
            autosynth_index(R.values * 1e305, TrainConfig(max_epochs=5), replications=3)

    def test_concordance_with_pca_on_factor_data(self):
        R, _ = factor_data(3, n=120, p=8)
        res = autosynth_index(R, TrainConfig(seed=0), 3)
        pca, _ = pca_index(R)
        assert abs(spearman(res.index.values, pca.values)) >= 0.8


@pytest.mark.slow
def test_city_scale_top_units_stable_across_master_seeds():
    # 74 areas x 13 indicators, 500 replications per master seed
    R, _ = factor_data(74, n=74, p=13, snr=4.0)
    compass = ampi_index(R)
    tops = []
    for master in (1, 100_000):
        res = autosynth_index(R, TrainConfig(seed=master), 500, compass)
        tops.append(set(np.argsort(-res.index.values, kind="stable")[:6]))
    assert len(tops[0] & tops[1]) >= 4
