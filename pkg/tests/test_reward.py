import random

import numpy as np
import pytest

from pcpg_seq2seq.metrics import edit_distance
from pcpg_seq2seq.reward import (
    DiscountMode,
    discounted_returns,
    immediate_reward_ints,
    immediate_rewards,
    prefix_distances,
    reward_trace,
    total_reward,
)


def test_perfect_prefix_rewards():
    assert immediate_reward_ints("ab", "ab") == [1, 1]


def test_reward_for_choosing_the_right_character():
    reference = "bin blue at f two now"
    prediction = "bin blue at f tw"
    rewards = immediate_reward_ints(prediction, reference)
    assert prefix_distances(prediction, reference)[-2:] == [6, 5]
    assert rewards[-1] == 1


def test_rewards_are_minus_one_zero_or_one():
    rng = random.Random(2)
    for _ in range(300):
        prediction = [rng.randrange(5) for _ in range(rng.randint(1, 12))]
        reference = [rng.randrange(5) for _ in range(rng.randint(1, 12))]
        assert set(immediate_reward_ints(prediction, reference)) <= {-1, 0, 1}


def test_telescoping_sum():
    rng = random.Random(3)
    for _ in range(1000):
        prediction = [rng.randrange(6) for _ in range(rng.randint(1, 20))]
        reference = [rng.randrange(6) for _ in range(rng.randint(1, 20))]
        rewards = immediate_reward_ints(prediction, reference)
        assert sum(rewards) == len(reference) - edit_distance(prediction, reference)


def test_prefix_distances_match_direct_computation():
    prediction, reference = "abxcd", "abcd"
    expected = [edit_distance(prediction[:u], reference) for u in range(len(prediction) + 1)]
    assert prefix_distances(prediction, reference) == expected


def test_prefix_distances_match_direct_computation_randomized():
    rng = random.Random(4)
    for _ in range(500):
        prediction = [rng.randrange(6) for _ in range(rng.randint(0, 20))]
        reference = [rng.randrange(6) for _ in range(rng.randint(1, 20))]
        expected = [edit_distance(prediction[:u], reference) for u in range(len(prediction) + 1)]
        assert prefix_distances(prediction, reference) == expected


def test_perfect_prediction_totals_reference_length():
    reference = [4, 9, 9, 12, 3, 7]
    assert sum(immediate_reward_ints(reference, reference)) == len(reference)


@pytest.mark.parametrize("prediction,reference", [("", "ab"), ("ab", "")])
def test_empty_inputs_are_errors(prediction, reference):
    with pytest.raises(ValueError):
        immediate_rewards(prediction, reference)


def test_returns_with_gamma_one_are_suffix_sums():
    for mode in DiscountMode:
        np.testing.assert_array_equal(discounted_returns([1, 1], 1.0, mode), [2.0, 1.0])


def test_conventional_gamma_zero_keeps_immediate_rewards():
    np.testing.assert_array_equal(
        discounted_returns([1.0, -1.0, 0.0], 0.0, DiscountMode.CONVENTIONAL), [1.0, -1.0, 0.0]
    )


def test_end_anchored_discount_example():
    returns = discounted_returns([1, 1, 1], 0.5, DiscountMode.END_ANCHORED)
    np.testing.assert_allclose(returns, [1.75, 1.5, 1.0])
    assert total_reward(returns) == pytest.approx(4.25)


def test_conventional_discount_example():
    returns = discounted_returns([1, 1, 1], 0.5, DiscountMode.CONVENTIONAL)
    np.testing.assert_allclose(returns, [1.75, 1.5, 1.0])
    returns = discounted_returns([1, 0, 2], 0.5, DiscountMode.CONVENTIONAL)
    np.testing.assert_allclose(returns, [1.5, 1.0, 2.0])


def test_total_reward_examples():
    assert total_reward([]) == 0.0
    assert total_reward([2, 1]) == 3.0


@pytest.mark.parametrize("gamma", [-0.1, 1.5])
def test_gamma_out_of_range(gamma):
    with pytest.raises(ValueError):
        discounted_returns([1.0], gamma)


def test_reward_trace_fields():
    trace = reward_trace("abc", "abd", gamma=1.0, baseline=0.5)
    assert len(trace) == 3
    np.testing.assert_array_equal(trace.immediate, [1.0, 1.0, 0.0])
    np.testing.assert_array_equal(trace.returns, [1.5, 0.5, -0.5])
    assert trace.total == pytest.approx(1.5)
    assert trace.distances == (3, 2, 1, 1)
