import math
from dataclasses import replace

import numpy as np
import pytest

from grpolab.config import TrainerConfig
from grpolab.errors import InvalidGroupError, InvalidBatchError, NumericDomainError
from grpolab.grpo_kernel import (Rollout, RolloutGroup, AdvantageVector, group_advantages,
                                 reward_std, k3_kl, clipped_token_term, is_clip_bound,
                                 mask_overlength, token_weights, batch_objective, prepare_group)

CFG = TrainerConfig()


def on_policy(n, logp=-1.0, truncated=False):
    lp = [logp] * n
    return Rollout(tuple(range(1, n + 1)), lp, lp, None, truncated)


def group(lengths, rewards, advantages=None):
    adv = None if advantages is None else AdvantageVector(advantages)
    return RolloutGroup("t", [on_policy(n) for n in lengths], rewards, adv)


def test_group_advantages_standardize():
    adv = group_advantages([1, 0, 1, 0])
    assert adv.values == (1.0, -1.0, 1.0, -1.0)


def test_group_advantages_identical_rewards():
    assert group_advantages([0.7] * 8).all_zero
    assert group_advantages([1, 1 + 1e-12]).all_zero


def test_group_advantages_errors():
    with pytest.raises(InvalidGroupError):
        group_advantages([1.0])
    with pytest.raises(NumericDomainError):
        group_advantages([1.0, float("nan")])


def test_group_advantages_random():
    """Zero mean and unit population std on many random groups."""
    rng = np.random.default_rng(0)
    for _ in range(1000):
        size = int(rng.integers(2, 33))
        rewards = rng.normal(0, 1, size) * rng.uniform(0.01, 10)
        if reward_std(rewards) < 1e-6:
            continue
        adv = np.array(group_advantages(rewards).values)
        assert abs(adv.mean()) <= 1e-9
        assert abs(adv.std() - 1.0) <= 1e-9


def test_group_advantages_affine_invariant():
    rng = np.random.default_rng(3)
    for _ in range(300):
        rewards = rng.normal(0, 1, int(rng.integers(2, 17)))
        if reward_std(rewards) < 1e-3:
            continue
        c, b = rng.uniform(0.1, 10), rng.uniform(-5, 5)
        base = group_advantages(rewards).values
        shifted = group_advantages(c * rewards + b).values
        assert shifted == pytest.approx(base, abs=1e-9)


def test_clipped_term_never_exceeds_unclipped():
    rng = np.random.default_rng(4)
    ratios = np.exp(rng.normal(0, 0.5, 2000))
    advantages = rng.normal(0, 2, 2000)
    for ratio, adv, eps in zip(ratios, advantages, rng.uniform(0.01, 0.5, 2000)):
        assert clipped_token_term(ratio, adv, eps) <= ratio * adv + 1e-12


def test_k3_kl():
    assert k3_kl(-1.3, -1.3) == 0.0
    r = 0.5
    assert math.isclose(k3_kl(math.log(0.5), math.log(0.25)), r - math.log(r) - 1, rel_tol=1e-12)
    rng = np.random.default_rng(1)
    for a, b in rng.uniform(-20, 0, size=(200, 2)):
        assert k3_kl(a, b) >= 0.0
    with pytest.raises(NumericDomainError):
        k3_kl(float("-inf"), -1.0)


def test_clipped_token_term():
    assert clipped_token_term(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert clipped_token_term(0.5, -1.0, 0.2) == pytest.approx(-0.8)
    assert clipped_token_term(1.0, 0.3, 0.2) == pytest.approx(0.3)
    # the pessimistic branch: a low ratio with a positive advantage is not clipped
    assert clipped_token_term(0.5, 1.0, 0.2) == pytest.approx(0.5)


def test_is_clip_bound():
    assert is_clip_bound(1.5, 1.0, 0.2)
    assert not is_clip_bound(1.5, -1.0, 0.2)
    assert is_clip_bound(0.5, -1.0, 0.2)
    assert not is_clip_bound(1.2, 1.0, 0.2)


def test_mask_overlength():
    rollouts = [on_policy(3), on_policy(10), on_policy(2, truncated=True)]
    g = RolloutGroup("t", rollouts, [1, 0, 1])
    adv = mask_overlength(g, AdvantageVector((0.5, -1.0, 0.5)), 8)
    assert adv.values == (0.5, 0.0, 0.0)

    with pytest.raises(InvalidGroupError):
        mask_overlength(g, AdvantageVector((1.0, 1.0)), 8)


def test_group_validation():
    with pytest.raises(InvalidGroupError):
        RolloutGroup("t", [on_policy(1)], [1.0])
    with pytest.raises(InvalidGroupError):
        RolloutGroup("t", [on_policy(1), on_policy(1)], [1.0])
    with pytest.raises(InvalidGroupError):
        Rollout((1, 2), (-1.0,), (-1.0,))
    with pytest.raises(InvalidGroupError):
        Rollout((1,), (0.5,), (0.5,))


def test_token_weights():
    g = group([3, 1], [1, 0], [1, -1])
    assert token_weights([g]) == [[0.25, 0.25]]
    assert token_weights([g], "sequence") == [[1 / 6, 1 / 2]]
    with pytest.raises(InvalidBatchError):
        token_weights([])
    with pytest.raises(InvalidBatchError):
        token_weights([g], "bogus")


def test_batch_objective_on_policy():
    # ratio 1 everywhere: the objective is the token-weighted mean advantage
    report = batch_objective([group([3, 1], [1, 0], [1, -1])], CFG)
    assert report.objective == pytest.approx(0.5)
    assert report.token_count == 4
    assert report.clip_fraction == 0.0
    assert report.zero_adv_fraction == 0.0

    seq = batch_objective([group([3, 1], [1, 0], [1, -1])],
                          replace(CFG, loss_aggregation="sequence"))
    assert seq.objective == pytest.approx(0.0)


def test_batch_objective_examples():
    single = RolloutGroup("t", [on_policy(1), on_policy(1)], [1, 0], AdvantageVector((1.0, 0.0)))
    assert batch_objective([single], CFG).objective == pytest.approx(0.5)

    old, cur = math.log(0.4), math.log(0.6)
    r = Rollout((1, 2), (old, old), (cur, cur))
    g = RolloutGroup("t", [r, r], [1, 0], AdvantageVector((1.0, -1.0)))
    # (2 * 1.2 + 2 * (-1.5)) / 4
    assert batch_objective([g], CFG).objective == pytest.approx(-0.15)


def test_reference_values():
    assert group_advantages([1, 1, 0, 0]).values == (1.0, 1.0, -1.0, -1.0)
    assert k3_kl(0.0, math.log(2)) == pytest.approx(0.306853, abs=1e-6)
    assert k3_kl(0.0, math.log(0.5)) == pytest.approx(0.193147, abs=1e-6)
    rollouts = [on_policy(5), on_policy(12)]
    adv = mask_overlength(RolloutGroup("t", rollouts, [1, 0]), AdvantageVector((1.0, -1.0)), 10)
    assert adv.values == (1.0, 0.0)


def test_batch_objective_zero_advantages():
    report = batch_objective([group([2, 2], [1, 1], [0, 0])], CFG)
    assert report.objective == 0.0
    assert report.zero_adv_fraction == 1.0


def test_batch_objective_clipping_and_kl():
    r = Rollout((1,), (math.log(0.5),), (math.log(0.8),), (math.log(0.8),))
    g = RolloutGroup("t", [r, r], [1, 0], AdvantageVector((1.0, 1.0)))
    report = batch_objective([g], CFG)
    # ratio 1.6 with A > 0 is clipped to 1.2
    assert report.objective == pytest.approx(1.2)
    assert report.clip_fraction == 1.0
    assert report.kl_term == pytest.approx(0.0)

    r2 = Rollout((1,), (math.log(0.5),), (math.log(0.5),), (math.log(0.25),))
    g2 = RolloutGroup("t", [r2, r2], [1, 0], AdvantageVector((0.0, 0.0)))
    report = batch_objective([g2], replace(CFG, beta=0.1))
    expected_kl = 0.5 - math.log(0.5) - 1
    assert report.kl_term == pytest.approx(expected_kl)
    assert report.objective == pytest.approx(-0.1 * expected_kl)


def test_batch_objective_errors():
    with pytest.raises(InvalidBatchError):
        batch_objective([], CFG)
    with pytest.raises(InvalidBatchError):
        batch_objective([group([1, 1], [1, 0])], CFG)
    with pytest.raises(InvalidBatchError):
        batch_objective([group([1, 1], [1, 0], [1, -1])], replace(CFG, beta=0.1))


def test_prepare_group_masks():
    g = RolloutGroup("t", [on_policy(2), on_policy(9)], [1, 0])
    prepared = prepare_group(g, replace(CFG, max_response_tokens=8))
    assert prepared.advantages.values == (1.0, 0.0)


if __name__ == "__main__":
    pytest.main(['-s', '--tb=native', '--pyargs', 'grpolab.tests.test_grpo_kernel'])
