"""Domain types and policy evaluation primitives."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import opekit as ok
from opekit.core import PROBABILITY_ATOL


class TestPolicyActionProbability:
    def test_deterministic_degenerate(self):
        policy = ok.PolicySpec.deterministic(action_count=4, action=2)
        assert ok.policy_action_probability(policy, [0.0], 2) == 1.0
        assert ok.policy_action_probability(policy, [0.0], 0) == 0.0

    def test_epsilon_greedy_split(self):
        scorer = ok.LinearScorer(weights=np.array([[1.0], [0.5], [0.2], [0.1]]))
        policy = ok.PolicySpec.epsilon_greedy(scorer, 0.1)
        x = [1.0]
        assert ok.policy_action_probability(policy, x, 0) == pytest.approx(0.925, abs=1e-15)
        for a in (1, 2, 3):
            assert ok.policy_action_probability(policy, x, a) == pytest.approx(0.025, abs=1e-15)

    def test_softmax_symmetric(self):
        scorer = ok.LinearScorer(weights=np.zeros((5, 3)))
        policy = ok.PolicySpec.softmax(scorer, temperature=1.0)
        for a in range(5):
            assert ok.policy_action_probability(policy, [0.3, -0.2, 4.0], a) == pytest.approx(0.2, abs=1e-12)

    def test_action_out_of_range(self):
        policy = ok.PolicySpec.deterministic(action_count=2, action=0)
        with pytest.raises(ok.InputError):
            ok.policy_action_probability(policy, [0.0], 2)

    def test_dimension_mismatch(self):
        scorer = ok.LinearScorer(weights=np.ones((2, 3)))
        policy = ok.PolicySpec.softmax(scorer, 1.0)
        with pytest.raises(ok.InputError):
            ok.policy_action_probability(policy, [1.0, 2.0], 0)

    def test_unknown_tabular_context(self):
        policy = ok.PolicySpec.tabular([[0.5, 0.5], [0.9, 0.1]])
        with pytest.raises(ok.InputError):
            ok.policy_action_probability(policy, [0.5, 0.5], 0)
        with pytest.raises(ok.InputError):
            ok.policy_action_probability(policy, [1.0, 1.0], 0)


class TestGreedyAction:
    def test_tie_breaks_to_lowest_index(self):
        scorer = ok.LinearScorer(weights=np.array([[0.2], [0.9], [0.9]]))
        assert ok.greedy_action(scorer, [1.0]) == 1

    def test_plain_argmax(self):
        scorer = ok.LinearScorer(weights=np.array([[1.0], [0.0], [0.0]]))
        assert ok.greedy_action(scorer, [1.0]) == 0

    def test_all_equal_picks_zero(self):
        scorer = ok.LinearScorer(weights=np.ones((4, 2)))
        assert ok.greedy_action(scorer, [0.7, 0.1]) == 0

    @given(
        scores=st.lists(st.floats(-50, 50), min_size=2, max_size=6),
        shift=st.floats(-100, 100),
    )
    def test_argmax_invariant_under_constant_shift(self, scores, shift):
        w = np.array(scores).reshape(-1, 1)
        base = ok.greedy_action(ok.LinearScorer(weights=w), [1.0])
        shifted = ok.greedy_action(ok.LinearScorer(weights=w + shift), [1.0])
        assert base == shifted


def _random_policy(rng, kind, k, d):
    if kind == "tabular":
        table = rng.uniform(0.05, 1.0, (d, k))
        return ok.PolicySpec.tabular(table / table.sum(axis=1, keepdims=True))
    scorer = ok.LinearScorer(weights=rng.normal(size=(k, d)), bias=rng.normal(size=k))
    if kind == "epsilon-greedy":
        return ok.PolicySpec.epsilon_greedy(scorer, float(rng.uniform(0, 1)))
    if kind == "softmax":
        return ok.PolicySpec.softmax(scorer, float(rng.uniform(0.2, 3.0)))
    return ok.PolicySpec.deterministic(action_count=k, scorer=scorer)


@pytest.mark.parametrize("kind", ["tabular", "epsilon-greedy", "softmax", "deterministic"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_probabilities_sum_to_one(kind, seed):
    rng = np.random.default_rng(seed)
    k, d = int(rng.integers(2, 6)), int(rng.integers(1, 5))
    if kind == "tabular":
        d = int(rng.integers(2, 5))
    policy = _random_policy(rng, kind, k, d)
    X = np.eye(d)[rng.integers(0, d, 20)] if kind == "tabular" else rng.normal(size=(20, d))
    probs = ok.action_probabilities(policy, X)
    assert probs.shape == (20, policy.action_count)
    assert np.all(probs >= 0)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=PROBABILITY_ATOL)


class TestPolicyValidation:
    def test_table_rows_must_be_distributions(self):
        with pytest.raises(ok.InputError):
            ok.PolicySpec.tabular([[0.5, 0.6]])
        with pytest.raises(ok.InputError):
            ok.PolicySpec.tabular([[1.2, -0.2]])

    def test_epsilon_range(self):
        scorer = ok.LinearScorer(weights=np.ones((2, 1)))
        with pytest.raises(ok.InputError):
            ok.PolicySpec.epsilon_greedy(scorer, 1.5)

    def test_softmax_needs_positive_temperature(self):
        scorer = ok.LinearScorer(weights=np.ones((2, 1)))
        with pytest.raises(ok.InputError):
            ok.PolicySpec.softmax(scorer, 0.0)

    def test_deterministic_needs_exactly_one_choice(self):
        with pytest.raises(ok.InputError):
            ok.PolicySpec.deterministic(action_count=2)
        scorer = ok.LinearScorer(weights=np.ones((2, 1)))
        with pytest.raises(ok.InputError):
            ok.PolicySpec.deterministic(action_count=2, action=0, scorer=scorer)


class TestLoggedInteraction:
    def test_field_validation(self):
        with pytest.raises(ok.InputError):
            ok.LoggedInteraction("c", (1.0,), -1, 0.5)
        with pytest.raises(ok.InputError):
            ok.LoggedInteraction("c", (1.0,), 0, float("nan"))
        with pytest.raises(ok.InputError):
            ok.LoggedInteraction("c", (1.0,), 0, 0.5, logging_propensity=0.0)
        with pytest.raises(ok.InputError):
            ok.LoggedInteraction("c", (1.0,), 0, 0.5, logging_propensity=1.5)

    def test_round_trip(self):
        record = ok.LoggedInteraction("ctx-9", (0.25, -1.5), 3, 0.125, logging_propensity=0.3, explored=True)
        assert ok.LoggedInteraction.from_dict(record.to_dict()) == record

    def test_round_trip_optional_fields_absent(self):
        record = ok.LoggedInteraction(4, (1.0,), 0, 1.0)
        doc = record.to_dict()
        assert "logging_propensity" not in doc and "explored" not in doc
        assert ok.LoggedInteraction.from_dict(doc) == record


class TestPolicySpecSerialization:
    @pytest.mark.parametrize("kind", ["tabular", "epsilon-greedy", "softmax", "deterministic"])
    def test_round_trip(self, kind):
        rng = np.random.default_rng(7)
        policy = _random_policy(rng, kind, 3, 2)
        assert ok.PolicySpec.from_dict(policy.to_dict()) == policy


class TestEstimateReport:
    def test_round_trip(self):
        report = ok.EstimateReport("IPS", 0.5, 0.01, 100, 80.0, 0.25, 3)
        assert ok.EstimateReport.from_dict(report.to_dict()) == report

    def test_csv_row_order(self):
        report = ok.EstimateReport("SNIPS", 1.0, 0.0, 2, 2.0)
        row = report.to_csv_row()
        assert row[0] == "SNIPS" and row[1] == 1.0 and row[3] == 2

    def test_invariants(self):
        with pytest.raises(ok.InputError):
            ok.EstimateReport("IPS", 0.5, -0.1, 10, 5.0)
        with pytest.raises(ok.InputError):
            ok.EstimateReport("IPS", 0.5, 0.1, 10, 11.0)
        with pytest.raises(ok.InputError):
            ok.EstimateReport("IPS", 0.5, float("inf"), 10, 5.0)
        with pytest.raises(ok.InputError):
            ok.EstimateReport("XX", 0.5, 0.1, 10, 5.0)


class TestRecordBatch:
    def test_behaves_as_record_sequence(self):
        batch = ok.RecordBatch(
            features=np.array([[1.0, 0.0], [0.0, 1.0]]),
            actions=[0, 1],
            rewards=[0.5, 1.0],
            logging_propensities=[0.5, np.nan],
            explored=np.array([1, -1], dtype=np.int8),
            context_ids=["a", "b"],
        )
        assert len(batch) == 2
        records = list(batch)
        assert records[0].logging_propensity == 0.5 and records[0].explored is True
        assert records[1].logging_propensity is None and records[1].explored is None
        rebuilt = ok.RecordBatch.from_records(records)
        np.testing.assert_array_equal(rebuilt.features, batch.features)
        np.testing.assert_array_equal(rebuilt.actions, batch.actions)
        np.testing.assert_array_equal(rebuilt.explored, batch.explored)

    def test_validate_action_bounds(self):
        batch = ok.RecordBatch(features=np.ones((1, 1)), actions=[5], rewards=[0.0])
        with pytest.raises(ok.InputError):
            batch.validate(action_count=3)

    def test_column_length_mismatch(self):
        with pytest.raises(ok.InputError):
            ok.RecordBatch(features=np.ones((2, 1)), actions=[0], rewards=[0.0, 1.0])
