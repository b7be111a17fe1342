import math

import numpy as np
import pytest

from sammd.estimators import h_matrix, mmd_u_squared
from sammd.exceptions import DimensionError, InvalidInputError
from sammd.kernels import GaussianKernel, gram_bundle, median_heuristic
from sammd.toymodels import (
    AttackConfig,
    IdentityFeaturizer,
    MLPFeaturizer,
    PrecomputedFeaturizer,
    ToyClassifier,
    fgsm,
    gen_dependent_gaussian,
    gen_non_iid,
    gen_synthetic,
    mlp_forward_backward,
    pgd,
    semantic_features,
    train_toy_classifier,
)


def _blob_problem(seed, n=400, std=0.6):
    rng = np.random.default_rng(seed)
    labels = rng.integers(2, size=n)
    centers = np.array([[0.0, 0.0], [3.0, 3.0]])
    data = centers[labels] + std * rng.standard_normal((n, 2))
    return data, labels.astype(np.int64)


class TestToyClassifier:
    def test_probabilities_form_simplex(self, rng):
        model = ToyClassifier.init_random(3, 8, 4, seed=0)
        p = model.predict_proba(rng.standard_normal((20, 3)))
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-10)

    def test_zero_weight_model_uniform_loss(self):
        model = ToyClassifier(np.zeros((3, 5)), np.zeros(5), np.zeros((5, 4)), np.zeros(4))
        loss, _, _ = mlp_forward_backward(model, [1.0, -2.0, 0.5], 2)
        assert loss == pytest.approx(math.log(4.0), abs=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_gradients_match_finite_differences(self, seed):
        r = np.random.default_rng(seed)
        model = ToyClassifier.init_random(3, 4, 3, seed=seed)
        x = r.standard_normal(3)
        label = int(r.integers(3))
        loss, grad_x, grads = mlp_forward_backward(model, x, label)
        step = 1e-5

        def loss_at(xv, m):
            return mlp_forward_backward(m, xv, label)[0]

        for i in range(3):
            xp, xm = x.copy(), x.copy()
            xp[i] += step
            xm[i] -= step
            fd = (loss_at(xp, model) - loss_at(xm, model)) / (2 * step)
            assert abs(grad_x[i] - fd) <= 1e-4 * max(abs(fd), 1e-8)

        for name in ["w1", "b1", "w2", "b2"]:
            arr = getattr(model, name)
            flat = arr.ravel()
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + step
                up = loss_at(x, model)
                flat[k] = orig - step
                down = loss_at(x, model)
                flat[k] = orig
                fd = (up - down) / (2 * step)
                assert abs(grads[name].ravel()[k] - fd) <= 1e-4 * max(abs(fd), 1e-8)

    def test_duplicate_rows_get_identical_gradients(self, rng):
        model = ToyClassifier.init_random(2, 4, 2, seed=1)
        x = rng.standard_normal(2)
        l1 = mlp_forward_backward(model, x, 1)
        l2 = mlp_forward_backward(model, x.copy(), 1)
        assert l1[0] == l2[0]
        np.testing.assert_array_equal(l1[1], l2[1])

    def test_label_out_of_range(self):
        model = ToyClassifier.init_random(2, 3, 2, seed=0)
        with pytest.raises(InvalidInputError):
            mlp_forward_backward(model, [0.0, 0.0], 5)

    def test_dimension_mismatch(self):
        model = ToyClassifier.init_random(2, 3, 2, seed=0)
        with pytest.raises(DimensionError):
            model.predict_proba(np.zeros((3, 4)))

    def test_save_load_roundtrip(self, tmp_path):
        model = ToyClassifier.init_random(3, 5, 2, seed=4)
        path = tmp_path / "model.npz"
        model.save(path)
        loaded = ToyClassifier.load(path)
        for name in ["w1", "b1", "w2", "b2"]:
            np.testing.assert_array_equal(getattr(model, name), getattr(loaded, name))


class TestTrainToyClassifier:
    def test_separable_blobs_reach_high_accuracy(self):
        for seed in range(10):
            data, labels = _blob_problem(seed)
            model = train_toy_classifier(data, labels, epochs=50, seed=seed)
            acc = (model.predict(data) == labels).mean()
            assert acc >= 0.95

    def test_zero_epochs_returns_seeded_init(self):
        data, labels = _blob_problem(0, n=50)
        model = train_toy_classifier(data, labels, epochs=0, seed=9, hidden_units=6)
        init = ToyClassifier.init_random(2, 6, 2, seed=9)
        np.testing.assert_array_equal(model.w1, init.w1)
        np.testing.assert_array_equal(model.w2, init.w2)

    def test_deterministic(self):
        data, labels = _blob_problem(2, n=100)
        m1 = train_toy_classifier(data, labels, epochs=5, seed=3)
        m2 = train_toy_classifier(data, labels, epochs=5, seed=3)
        np.testing.assert_array_equal(m1.w1, m2.w1)
        np.testing.assert_array_equal(m1.b2, m2.b2)

    def test_single_class_rejected(self):
        with pytest.raises(InvalidInputError):
            train_toy_classifier(np.zeros((10, 2)), np.zeros(10, dtype=int))


class TestSemanticFeatures:
    def test_zero_weight_model_gives_constant_rows(self, rng):
        model = ToyClassifier(np.zeros((2, 4)), np.zeros(4), np.zeros((4, 2)), np.zeros(2))
        feats = semantic_features(model, rng.standard_normal((6, 2)))
        np.testing.assert_allclose(feats, math.log(2.0), atol=1e-12)

    def test_shape_contract(self, rng):
        model = ToyClassifier.init_random(3, 7, 2, seed=0)
        feats = semantic_features(model, rng.standard_normal((11, 3)))
        assert feats.shape == (11, 7)

    def test_features_separate_attacks_better_than_raw(self, scenario_factory):
        # the hidden layer amplifies boundary-crossing perturbations
        better = 0
        for seed in range(10):
            scn = scenario_factory(seed)
            rng = np.random.default_rng(5000 + seed)
            clean = scn.draw_natural(120, rng)
            adv = scn.draw_attacked(120, rng, epsilon=0.2, attack="pgd")
            raw_mmd = mmd_u_squared(
                h_matrix(gram_bundle(clean, adv, GaussianKernel(median_heuristic(clean, adv))))
            )
            fc, fa = scn.model.hidden(clean), scn.model.hidden(adv)
            feat_mmd = mmd_u_squared(
                h_matrix(gram_bundle(fc, fa, GaussianKernel(median_heuristic(fc, fa))))
            )
            better += feat_mmd > raw_mmd
        assert better >= 7


class TestAttacks:
    @pytest.fixture(scope="class")
    def trained(self):
        data, labels = _blob_problem(0)
        model = train_toy_classifier(data, labels, epochs=50, seed=0)
        return model, data, labels

    def test_zero_epsilon_is_identity(self, trained):
        model, data, labels = trained
        cfg = AttackConfig(epsilon=0.0, steps=1, step_size=0.0)
        np.testing.assert_array_equal(fgsm(model, data[:10], labels[:10], cfg), data[:10])

    def test_fgsm_ball_containment_exact(self, trained):
        model, data, labels = trained
        cfg = AttackConfig.from_data(data, epsilon=0.25, steps=1, step_size=0.25)
        adv = fgsm(model, data, labels, cfg)
        assert np.abs(adv - data).max() <= 0.25
        assert np.all(adv >= cfg.lower) and np.all(adv <= cfg.upper)

    def test_fgsm_increases_loss_on_most_points(self):
        for seed in range(10):
            data, labels = _blob_problem(seed, n=200)
            model = train_toy_classifier(data, labels, epochs=50, seed=seed)
            cfg = AttackConfig.from_data(data, epsilon=0.3, steps=1, step_size=0.3)
            adv = fgsm(model, data, labels, cfg)
            increased = 0
            for i in range(data.shape[0]):
                l0, _, _ = mlp_forward_backward(model, data[i], labels[i])
                l1, _, _ = mlp_forward_backward(model, adv[i], labels[i])
                increased += l1 >= l0
            assert increased / data.shape[0] >= 0.9

    def test_pgd_single_step_equals_fgsm_bitwise(self, trained):
        model, data, labels = trained
        cfg = AttackConfig.from_data(data, epsilon=0.2, steps=1, step_size=0.2)
        np.testing.assert_array_equal(
            pgd(model, data, labels, cfg), fgsm(model, data, labels, cfg)
        )

    def test_pgd_dominates_fgsm(self):
        for seed in range(10):
            data, labels = _blob_problem(seed, n=150)
            model = train_toy_classifier(data, labels, epochs=50, seed=seed)
            cfg_f = AttackConfig.from_data(data, epsilon=0.3, steps=1, step_size=0.3)
            cfg_p = AttackConfig.from_data(data, epsilon=0.3, steps=20, step_size=0.03)
            adv_f = fgsm(model, data, labels, cfg_f)
            adv_p = pgd(model, data, labels, cfg_p)
            wins = 0
            for i in range(data.shape[0]):
                lf, _, _ = mlp_forward_backward(model, adv_f[i], labels[i])
                lp, _, _ = mlp_forward_backward(model, adv_p[i], labels[i])
                wins += lp >= lf
            assert wins / data.shape[0] >= 0.7

    def test_pgd_iterates_stay_in_ball(self, trained):
        model, data, labels = trained
        x = data[:30]
        for steps in [1, 3, 7, 12]:
            cfg = AttackConfig.from_data(data, epsilon=0.2, steps=steps, step_size=0.05)
            adv = pgd(model, x, labels[:30], cfg)
            assert np.abs(adv - x).max() <= 0.2

    def test_fooling_rate_nondecreasing_in_epsilon(self):
        rates = {eps: [] for eps in [0.05, 0.1, 0.2]}
        for seed in range(10):
            data, labels = _blob_problem(seed, n=200, std=0.35)
            model = train_toy_classifier(data, labels, epochs=50, seed=seed)
            fresh, fresh_labels = _blob_problem(7000 + seed, n=200, std=0.35)
            for eps in rates:
                cfg = AttackConfig.from_data(fresh, epsilon=eps, steps=1, step_size=eps)
                adv = fgsm(model, fresh, fresh_labels, cfg)
                rates[eps].append((model.predict(adv) != fresh_labels).mean())
        meds = [np.median(rates[e]) for e in [0.05, 0.1, 0.2]]
        assert meds[0] <= meds[1] <= meds[2]

    def test_step_size_cannot_exceed_epsilon(self):
        with pytest.raises(InvalidInputError):
            AttackConfig(epsilon=0.1, steps=5, step_size=0.2)
        with pytest.raises(InvalidInputError):
            AttackConfig(epsilon=0.1, steps=0)


class TestGenerators:
    def test_gaussian_law_of_large_numbers(self):
        data, labels = gen_synthetic("gaussian", {"dim": 3}, 100_000, seed=0)
        assert np.abs(data.mean(axis=0)).max() <= 0.02
        assert np.all(labels == 0)

    def test_seeded_determinism(self):
        a, _ = gen_synthetic("gaussian", {"dim": 2}, 100, seed=5)
        b, _ = gen_synthetic("gaussian", {"dim": 2}, 100, seed=5)
        np.testing.assert_array_equal(a, b)

    def test_blobs_balanced(self):
        _, labels = gen_synthetic(
            "blobs", {"centers": [[0, 0], [5, 5]], "std": 0.5}, 10_000, seed=1
        )
        frac = labels.mean()
        assert abs(frac - 0.5) <= 0.05

    def test_unknown_kind(self):
        with pytest.raises(InvalidInputError):
            gen_synthetic("spiral", {}, 10, seed=0)

    def test_non_iid_flavor_b_row_count(self):
        data, labels = _blob_problem(0, n=25)
        model = train_toy_classifier(data, labels, epochs=5, seed=0)
        cfg = AttackConfig.from_data(data, epsilon=0.1)
        out = gen_non_iid("b", data, labels, model, cfg, np.random.default_rng(0))
        assert out.shape == (100, 2)

    def test_non_iid_flavor_a_zero_epsilon(self):
        data, labels = _blob_problem(0, n=20)
        model = train_toy_classifier(data, labels, epochs=5, seed=0)
        cfg = AttackConfig(epsilon=0.0, steps=1, step_size=0.0)
        out = gen_non_iid("a", data, labels, model, cfg, np.random.default_rng(0))
        np.testing.assert_array_equal(out, data)

    def test_dependent_gaussian_near_iid_limit(self):
        data = gen_dependent_gaussian(100_000, 1, timescale=1e-6, seed=0)
        means = data.mean(axis=1)
        c = means - means.mean()
        lag1 = float(c[:-1] @ c[1:] / (c @ c))
        assert abs(lag1) <= 0.02

    def test_dependent_gaussian_marginal_moments(self):
        data = gen_dependent_gaussian(100_000, 2, timescale=5.0, seed=1, mean=2.0, std=0.5)
        assert np.abs(data.mean(axis=0) - 2.0).max() <= 0.05
        assert np.abs(data.std(axis=0) - 0.5).max() <= 0.05

    def test_dependent_gaussian_deterministic(self):
        a = gen_dependent_gaussian(50, 2, 1.0, seed=3)
        b = gen_dependent_gaussian(50, 2, 1.0, seed=3)
        np.testing.assert_array_equal(a, b)

    def test_dependent_gaussian_has_lag_correlation(self):
        data = gen_dependent_gaussian(100_000, 1, timescale=2.0, seed=2)
        c = data[:, 0] - data[:, 0].mean()
        lag1 = float(c[:-1] @ c[1:] / (c @ c))
        assert lag1 == pytest.approx(math.exp(-0.5), abs=0.02)


class TestFeaturizers:
    def test_mlp_featurizer_fit_transform(self):
        data, labels = _blob_problem(0, n=120)
        feat = MLPFeaturizer(hidden_units=6, epochs=5, seed=0).fit(data, labels)
        out = feat.transform(data)
        assert out.shape == (120, 6)

    def test_unfitted_rejected(self, rng):
        with pytest.raises(InvalidInputError):
            MLPFeaturizer().transform(rng.standard_normal((3, 2)))

    def test_identity(self, rng):
        x = rng.standard_normal((5, 3))
        np.testing.assert_array_equal(IdentityFeaturizer().transform(x), x)

    def test_precomputed_lookup(self, rng):
        raw = rng.standard_normal((6, 2))
        feats = rng.standard_normal((6, 4))
        f = PrecomputedFeaturizer()
        f.register(raw, feats)
        sel = [4, 1, 3]
        np.testing.assert_array_equal(f.transform(raw[sel]), feats[sel])

    def test_precomputed_missing_row(self, rng):
        f = PrecomputedFeaturizer()
        f.register(rng.standard_normal((3, 2)), rng.standard_normal((3, 2)))
        with pytest.raises(InvalidInputError):
            f.transform(np.zeros((1, 2)))
