"""Shared synthetic worlds, policies, and the three-row worked example."""

import numpy as np

import opekit as ok

# 4 contexts x 3 actions, Bernoulli rewards
REWARD_TABLE = np.array(
    [
        [0.15, 0.55, 0.35],
        [0.60, 0.25, 0.45],
        [0.30, 0.70, 0.20],
        [0.50, 0.40, 0.80],
    ]
)
CONTEXT_PROBS = (0.35, 0.30, 0.20, 0.15)

BASE_WEIGHTS = np.array(
    [
        [0.9, 0.1, 0.4, 0.2],
        [0.3, 0.8, 0.9, 0.1],
        [0.2, 0.5, 0.1, 0.9],
    ]
)
TARGET_WEIGHTS = np.array(
    [
        [0.2, 0.9, 0.5, 0.3],
        [0.8, 0.2, 0.3, 0.5],
        [0.4, 0.4, 0.9, 0.8],
    ]
)


def make_env(reward_noise="bernoulli", noise_sigma=0.1):
    return ok.BanditEnvironment(
        action_count=3,
        contexts=ok.DiscreteContexts(probabilities=CONTEXT_PROBS),
        mean_reward=ok.TabularMeanReward(table=REWARD_TABLE),
        reward_noise=reward_noise,
        noise_sigma=noise_sigma,
    )


def base_scorer():
    return ok.LinearScorer(weights=BASE_WEIGHTS)


def logging_policy(epsilon=0.1):
    return ok.PolicySpec.epsilon_greedy(base_scorer(), epsilon)


def softmax_target(temperature=0.5):
    return ok.PolicySpec.softmax(ok.LinearScorer(weights=TARGET_WEIGHTS), temperature)


def softmax_target_family(count, seed):
    """Softmax policies around the true scores, spread by parameter noise."""
    rng = np.random.default_rng(seed)
    policies = []
    for _ in range(count):
        noise = rng.normal(scale=0.6, size=(3, 4))
        temperature = float(rng.uniform(0.25, 2.5))
        policies.append(ok.PolicySpec.softmax(ok.LinearScorer(weights=REWARD_TABLE.T + noise), temperature))
    return policies


def three_row_batch():
    """The worked example: rewards and both propensities fixed by hand.

    Three one-hot contexts, every logged action 0; the tabular target from
    :func:`three_row_policy` reproduces the target propensities 0.8/0.7/0.9
    while the log carries the logging propensities 0.6/0.5/0.7.
    """
    return ok.RecordBatch(
        features=np.eye(3),
        actions=[0, 0, 0],
        rewards=[1.0, 0.5, 1.5],
        logging_propensities=[0.6, 0.5, 0.7],
        context_ids=[0, 1, 2],
    )


def three_row_policy():
    return ok.PolicySpec.tabular([[0.8, 0.2], [0.7, 0.3], [0.9, 0.1]])
