"""Propensity recovery and importance weights."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

import opekit as ok
from opekit.propensity import MODE_EPSILON_GREEDY_RECOVERY, MODE_EXPLORATION_ONLY


def _record(action=0, explored=None):
    return ok.LoggedInteraction("c", (1.0,), action, 1.0, explored=explored)


class TestRecovery:
    def test_epsilon_greedy_match(self):
        cfg = ok.PropensityConfig(mode=MODE_EPSILON_GREEDY_RECOVERY, epsilon=0.1, action_count=4)
        assert ok.recover_logging_propensity(_record(action=2), 2, cfg) == pytest.approx(0.925, abs=1e-15)

    def test_epsilon_greedy_mismatch(self):
        cfg = ok.PropensityConfig(mode=MODE_EPSILON_GREEDY_RECOVERY, epsilon=0.1, action_count=4)
        assert ok.recover_logging_propensity(_record(action=1), 2, cfg) == pytest.approx(0.025, abs=1e-15)

    def test_exploration_only_uniform(self):
        cfg = ok.PropensityConfig(mode=MODE_EXPLORATION_ONLY, epsilon=0.2, action_count=10)
        assert ok.recover_logging_propensity(_record(explored=True), 0, cfg) == 0.1

    def test_exploration_only_rejects_greedy_traffic(self):
        cfg = ok.PropensityConfig(mode=MODE_EXPLORATION_ONLY, epsilon=0.2, action_count=10)
        with pytest.raises(ok.RecordRejected):
            ok.recover_logging_propensity(_record(explored=False), 0, cfg)
        with pytest.raises(ok.RecordRejected):
            ok.recover_logging_propensity(_record(explored=None), 0, cfg)

    def test_missing_epsilon_is_a_config_error(self):
        with pytest.raises(ok.ConfigError):
            ok.PropensityConfig(mode=MODE_EPSILON_GREEDY_RECOVERY, action_count=4)

    @given(
        epsilon=st.floats(1e-6, 1.0),
        k=st.integers(2, 64),
    )
    def test_recovered_distribution_sums_to_one_exactly(self, epsilon, k):
        greedy, other = ok.epsilon_greedy_propensities(epsilon, k)
        assert math.fsum([greedy] + [other] * (k - 1)) == 1.0
        assert 0.0 <= other <= greedy <= 1.0


class TestImportanceWeight:
    def test_ratio(self):
        assert ok.importance_weight(0.8, 0.6) == pytest.approx(0.8 / 0.6, abs=1e-15)

    def test_identical_policies(self):
        assert ok.importance_weight(0.5, 0.5) == 1.0

    def test_clipping(self):
        cfg = ok.PropensityConfig(clip_max=2.0)
        assert ok.importance_weight(1.0, 0.01, cfg) == 2.0

    def test_zero_target_short_circuits(self):
        assert ok.importance_weight(0.0, 0.0) == 0.0
        assert ok.importance_weight(0.0, 0.5) == 0.0

    def test_support_violation(self):
        with pytest.raises(ok.SupportViolationError):
            ok.importance_weight(0.3, 0.0)

    def test_probability_range_checks(self):
        with pytest.raises(ok.InputError):
            ok.importance_weight(1.2, 0.5)
        with pytest.raises(ok.InputError):
            ok.importance_weight(0.5, -0.1)

    @given(p=st.floats(1e-9, 1.0))
    def test_scale_consistency(self, p):
        assert ok.importance_weight(p, p) == 1.0

    @given(
        target=st.floats(0.0, 1.0),
        logging=st.floats(1e-9, 1.0),
        clip=st.floats(1.001, 100.0),
    )
    def test_clipping_never_increases(self, target, logging, clip):
        raw = ok.importance_weight(target, logging)
        clipped = ok.importance_weight(target, logging, ok.PropensityConfig(clip_max=clip))
        assert clipped <= raw


class TestConfigValidation:
    def test_clip_must_exceed_one(self):
        with pytest.raises(ok.ConfigError):
            ok.PropensityConfig(clip_max=1.0)

    def test_unknown_mode(self):
        with pytest.raises(ok.ConfigError):
            ok.PropensityConfig(mode="guesswork")

    def test_round_trip(self):
        cfg = ok.PropensityConfig(
            mode=MODE_EPSILON_GREEDY_RECOVERY, epsilon=0.05, action_count=3, clip_max=20.0, support_violation="skip"
        )
        assert ok.PropensityConfig.from_dict(cfg.to_dict()) == cfg
