"""Reward model fitting and prediction."""

import numpy as np
import pytest

import opekit as ok
from opekit.reward_model import feature_buckets


def _batch(features, actions, rewards):
    return ok.RecordBatch(features=np.asarray(features, dtype=float), actions=actions, rewards=rewards)


class TestTabularMean:
    def test_constant_rewards_fit_constant(self):
        rng = np.random.default_rng(0)
        batch = _batch(rng.normal(size=(50, 3)), rng.integers(0, 2, 50), np.full(50, 0.7))
        model = ok.fit_reward_model(batch, "tabular-mean", action_count=2)
        preds = model.predict_all_actions(rng.normal(size=(20, 3)))
        np.testing.assert_allclose(preds, 0.7, atol=1e-12)

    def test_two_context_cell_means_exact(self):
        features = np.eye(2)[[0, 0, 1, 1]]
        actions = [0, 1, 0, 1]
        rewards = [0.0, 1.0, 1.0, 0.0]
        model = ok.fit_reward_model(_batch(features, actions, rewards), "tabular-mean", action_count=2)
        np.testing.assert_allclose(model.predict_batch(features, actions), rewards, atol=0)

    def test_training_cell_means_match_empirical(self):
        rng = np.random.default_rng(5)
        features = np.eye(3)[rng.integers(0, 3, 300)]
        actions = rng.integers(0, 2, 300)
        rewards = rng.uniform(0, 1, 300)
        model = ok.fit_reward_model(_batch(features, actions, rewards), "tabular-mean", action_count=2)
        for ctx in range(3):
            for a in range(2):
                mask = (features[:, ctx] == 1.0) & (actions == a)
                if mask.any():
                    pred = ok.predict_reward(model, np.eye(3)[ctx], a)
                    assert pred == pytest.approx(rewards[mask].mean(), abs=1e-12)

    def test_unseen_bucket_falls_back_to_global_mean(self):
        features = np.eye(2)[[0, 0, 1, 1]]
        rewards = [0.0, 1.0, 1.0, 0.5]
        model = ok.fit_reward_model(_batch(features, [0, 1, 0, 1], rewards), "tabular-mean", action_count=2)
        unseen = np.array([17.5, -3.25])
        assert ok.predict_reward(model, unseen, 0) == pytest.approx(np.mean(rewards), abs=1e-12)

    def test_empty_training_rejected(self):
        with pytest.raises(ok.InputError):
            ok.fit_reward_model([], "tabular-mean", action_count=2)


class TestRidgeLinear:
    def test_exact_recovery_at_lambda_zero(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(400, 3))
        actions = rng.integers(0, 2, 400)
        w_true = rng.normal(size=(2, 3))
        rewards = (X * w_true[actions]).sum(axis=1) + 0.25
        model = ok.fit_reward_model(_batch(X, actions, rewards), "ridge-linear", 0.0, action_count=2)
        preds = model.predict_batch(X, actions)
        np.testing.assert_allclose(preds, rewards, atol=1e-6)

    def test_zero_weights_predict_intercept(self):
        model = ok.RewardModel(
            kind="ridge-linear",
            action_count=2,
            feature_dim=2,
            coefficients=np.array([0.0, 0.0, 0.0, 0.0, 0.4]),
        )
        assert ok.predict_reward(model, [3.0, -1.0], 1) == pytest.approx(0.4)

    def test_shrinkage_is_monotone_in_lambda(self):
        rng = np.random.default_rng(13)
        X = rng.normal(size=(300, 2))
        actions = rng.integers(0, 3, 300)
        rewards = rng.normal(size=300) + X[:, 0]
        batch = _batch(X, actions, rewards)
        norms = []
        for lam in (0.1, 10.0, 1000.0):
            model = ok.fit_reward_model(batch, "ridge-linear", lam, action_count=3)
            norms.append(np.linalg.norm(model.coefficients[:-1]))
        assert norms[0] > norms[1] > norms[2]

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(1)
        model = ok.fit_reward_model(_batch(rng.normal(size=(10, 2)), [0] * 10, [1.0] * 10), "ridge-linear", action_count=1)
        with pytest.raises(ok.InputError):
            ok.predict_reward(model, [1.0, 2.0, 3.0], 0)


class TestExpectedModelReward:
    def _model(self, values):
        features = np.eye(1)[[0, 0]]
        return ok.fit_reward_model(
            _batch(np.array([[1.0], [1.0]]), [0, 1], values), "tabular-mean", action_count=2
        )

    def test_deterministic_policy_reduces_to_point_prediction(self):
        model = self._model([0.9, 0.4])
        policy = ok.PolicySpec.deterministic(action_count=2, action=1)
        assert ok.expected_model_reward(model, policy, [1.0]) == pytest.approx(0.4, abs=1e-12)

    def test_uniform_policy_averages(self):
        model = self._model([0.2, 0.8])
        policy = ok.PolicySpec.tabular([[0.5, 0.5]])
        assert ok.expected_model_reward(model, policy, [1.0]) == pytest.approx(0.5, abs=1e-12)

    def test_weighted_average(self):
        model = self._model([0.0, 1.0])
        policy = ok.PolicySpec.tabular([[0.25, 0.75]])
        assert ok.expected_model_reward(model, policy, [1.0]) == pytest.approx(0.75, abs=1e-12)

    def test_bounded_by_extremes(self):
        rng = np.random.default_rng(21)
        model = ok.fit_reward_model(
            _batch(rng.normal(size=(100, 2)), rng.integers(0, 3, 100), rng.uniform(-1, 2, 100)),
            "tabular-mean",
            action_count=3,
        )
        scorer = ok.LinearScorer(weights=rng.normal(size=(3, 2)))
        policy = ok.PolicySpec.softmax(scorer, 0.8)
        for _ in range(50):
            x = rng.normal(size=2)
            preds = model.predict_all_actions(x.reshape(1, -1))[0]
            value = ok.expected_model_reward(model, policy, x)
            assert preds.min() - 1e-12 <= value <= preds.max() + 1e-12

    def test_action_count_mismatch(self):
        model = self._model([0.1, 0.2])
        policy = ok.PolicySpec.deterministic(action_count=3, action=0)
        with pytest.raises(ok.InputError):
            ok.expected_model_reward(model, policy, [1.0])


class TestCrossFit:
    def test_fold_models_exclude_own_fold(self):
        # fold 0 records all have reward 0, fold 1 records all have reward 1;
        # cross-fit predictions must come from the opposite fold
        n = 40
        features = np.ones((n, 1))
        rewards = np.array([i % 2 for i in range(n)], dtype=float)
        model = ok.fit_cross_fitted(_batch(features, [0] * n, rewards), "tabular-mean", action_count=1)
        preds = model.predict_batch(features, np.zeros(n, dtype=int), indices=np.arange(n))
        np.testing.assert_allclose(preds[0::2], 1.0, atol=1e-12)
        np.testing.assert_allclose(preds[1::2], 0.0, atol=1e-12)

    def test_requires_indices(self):
        model = ok.fit_cross_fitted(
            _batch(np.ones((4, 1)), [0] * 4, [1.0] * 4), "tabular-mean", action_count=1
        )
        with pytest.raises(ok.InputError):
            model.predict_all_actions(np.ones((2, 1)))


class TestSerialization:
    def test_tabular_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        model = ok.fit_reward_model(
            _batch(rng.normal(size=(30, 2)), rng.integers(0, 2, 30), rng.uniform(0, 1, 30)),
            "tabular-mean",
            action_count=2,
        )
        path = tmp_path / "model.json"
        model.save(str(path))
        loaded = ok.RewardModel.load(str(path))
        X = rng.normal(size=(10, 2))
        np.testing.assert_array_equal(loaded.predict_all_actions(X), model.predict_all_actions(X))

    def test_ridge_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        model = ok.fit_reward_model(
            _batch(rng.normal(size=(30, 2)), rng.integers(0, 2, 30), rng.uniform(0, 1, 30)),
            "ridge-linear",
            0.5,
            action_count=2,
        )
        path = tmp_path / "model.json"
        model.save(str(path))
        loaded = ok.RewardModel.load(str(path))
        np.testing.assert_array_equal(loaded.coefficients, model.coefficients)

    def test_unknown_schema_version_rejected(self):
        with pytest.raises(ok.InputError):
            ok.RewardModel.from_dict({"schema_version": 99, "kind": "tabular-mean", "action_count": 1})


class TestFeatureBuckets:
    def test_stable_across_calls(self):
        X = np.random.default_rng(4).normal(size=(50, 3))
        np.testing.assert_array_equal(feature_buckets(X, 64), feature_buckets(X, 64))

    def test_negative_zero_normalized(self):
        a = feature_buckets(np.array([[0.0, 1.0]]), 64)
        b = feature_buckets(np.array([[-0.0, 1.0]]), 64)
        assert a[0] == b[0]

    def test_small_one_hot_sets_injective_at_default_buckets(self):
        for c in range(2, 13):
            buckets = feature_buckets(np.eye(c), 64)
            assert len(set(buckets.tolist())) == c
