"""Edit-distance rewards and discounted returns for sampled episodes."""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Hashable, List, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.99


class DiscountMode(str, Enum):
    """How returns weight future rewards.

    ``END_ANCHORED`` applies gamma**(U - i) to reward i, so early steps are weighted
    least. ``CONVENTIONAL`` applies gamma**(i - u) relative to the current step.
    """

    END_ANCHORED = "end-anchored"
    CONVENTIONAL = "conventional"


@dataclass(frozen=True)
class RewardTrace:
    """Rewards for one episode of length U."""

    immediate: np.ndarray
    returns: np.ndarray
    total: float
    gamma: float
    distances: tuple  # ED(y[:u], S) for u = 0..U, integers

    def __len__(self) -> int:
        return len(self.immediate)


def prefix_distances(prediction: Sequence[Hashable], reference: Sequence[Hashable]) -> List[int]:
    """ED(prediction[:u], reference) for u = 0..U in one incremental DP pass.

    Row u of the DP table is built from row u - 1, so each prefix costs
    O(|reference|) extra work.
    """
    row = list(range(len(reference) + 1))
    distances = [row[-1]]
    for u, symbol in enumerate(prediction, start=1):
        current = [u] + [0] * len(reference)
        for j, target in enumerate(reference, start=1):
            current[j] = min(
                row[j] + 1,
                current[j - 1] + 1,
                row[j - 1] + (symbol != target),
            )
        row = current
        distances.append(row[-1])
    return distances


def immediate_reward_ints(
    prediction: Sequence[Hashable], reference: Sequence[Hashable]
) -> List[int]:
    """Integer immediate rewards r_u = ED(y[:u-1], S) - ED(y[:u], S).

    For u = 1 the empty prefix has distance |S|, which is the first-step case.
    """
    if len(prediction) == 0:
        raise ValueError("immediate rewards need a non-empty prediction")
    if len(reference) == 0:
        raise ValueError("immediate rewards need a non-empty reference")
    distances = prefix_distances(prediction, reference)
    return [distances[u - 1] - distances[u] for u in range(1, len(distances))]


def immediate_rewards(prediction: Sequence[Hashable], reference: Sequence[Hashable]) -> np.ndarray:
    return np.asarray(immediate_reward_ints(prediction, reference), dtype=np.float64)


def discounted_returns(
    immediate: Sequence[float],
    gamma: float = DEFAULT_GAMMA,
    mode: DiscountMode = DiscountMode.END_ANCHORED,
) -> np.ndarray:
    """Per-step returns R_u over the suffix u..U."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    mode = DiscountMode(mode)
    rewards = np.asarray(immediate, dtype=np.float64)
    length = len(rewards)
    returns = np.zeros(length, dtype=np.float64)
    if mode is DiscountMode.END_ANCHORED:
        # The weight of reward i does not depend on u, so R_u is a suffix sum.
        weights = np.array([gamma ** (length - 1 - i) for i in range(length)])
        running = 0.0
        for u in range(length - 1, -1, -1):
            running += weights[u] * rewards[u]
            returns[u] = running
    else:
        running = 0.0
        for u in range(length - 1, -1, -1):
            running = rewards[u] + gamma * running
            returns[u] = running
    return returns


def total_reward(returns: Sequence[float]) -> float:
    return float(np.sum(np.asarray(returns, dtype=np.float64)))


def reward_trace(
    prediction: Sequence[Hashable],
    reference: Sequence[Hashable],
    gamma: float = DEFAULT_GAMMA,
    mode: DiscountMode = DiscountMode.END_ANCHORED,
    baseline: float = 0.0,
) -> RewardTrace:
    """Full reward bookkeeping for one episode.

    ``baseline`` is subtracted from every return; 0 keeps raw returns.
    """
    distances = prefix_distances(prediction, reference)
    if len(prediction) == 0 or len(reference) == 0:
        raise ValueError("reward traces need non-empty prediction and reference")
    ints = [distances[u - 1] - distances[u] for u in range(1, len(distances))]
    immediate = np.asarray(ints, dtype=np.float64)
    returns = discounted_returns(immediate, gamma, mode)
    if baseline:
        returns = returns - baseline
    return RewardTrace(
        immediate=immediate,
        returns=returns,
        total=total_reward(returns),
        gamma=gamma,
        distances=tuple(distances),
    )
