"""
Group-relative policy objective: advantages, clipped surrogate, k3 KL estimator,
token-level aggregation and overlength masking.

Everything here is a pure function of immutable inputs. Reductions use
``math.fsum`` over terms laid out in rollout order, so results do not depend
on platform summation order.
"""
import math
import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

from .errors import InvalidGroupError, InvalidBatchError, NumericDomainError

logger = logging.getLogger(__name__)

DEFAULT_EPS_STD = 1e-8


@dataclass(frozen=True)
class Rollout:
    """
    One sampled response with its per-token log-probabilities (nats).

    ``logp_old`` is the sampling policy, ``logp_cur`` the policy being
    optimized and ``logp_ref`` (optional) the frozen reference policy.
    """
    tokens: Tuple[int, ...]
    logp_old: Tuple[float, ...]
    logp_cur: Tuple[float, ...]
    logp_ref: Optional[Tuple[float, ...]] = None
    truncated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        for name in ("logp_old", "logp_cur", "logp_ref"):
            values = getattr(self, name)
            if values is None:
                continue
            values = tuple(float(v) for v in values)
            object.__setattr__(self, name, values)
            if len(values) != len(self.tokens):
                raise InvalidGroupError(
                    f"{name} has {len(values)} entries for {len(self.tokens)} tokens")
            if any(v > 1e-12 for v in values):
                raise InvalidGroupError(f"{name} contains a positive log-probability")

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class AdvantageVector:
    values: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]

    @property
    def all_zero(self):
        return all(v == 0.0 for v in self.values)


@dataclass(frozen=True)
class RolloutGroup:
    """
    The G responses sampled for one task, their rewards, and (once computed)
    their advantages.
    """
    task_id: str
    rollouts: Tuple[Rollout, ...]
    rewards: Tuple[float, ...]
    advantages: Optional[AdvantageVector] = None

    def __post_init__(self):
        object.__setattr__(self, "rollouts", tuple(self.rollouts))
        object.__setattr__(self, "rewards", tuple(float(r) for r in self.rewards))
        if len(self.rollouts) != len(self.rewards):
            raise InvalidGroupError(
                f"group {self.task_id}: {len(self.rollouts)} rollouts "
                f"but {len(self.rewards)} rewards")
        if len(self.rollouts) < 2:
            raise InvalidGroupError(f"group {self.task_id}: need at least 2 rollouts")
        if self.advantages is not None and len(self.advantages) != len(self.rollouts):
            raise InvalidGroupError(f"group {self.task_id}: advantage vector has the wrong length")

    @property
    def size(self):
        return len(self.rollouts)

    def with_advantages(self, adv):
        return replace(self, advantages=adv)

    def with_rollouts(self, rollouts):
        return replace(self, rollouts=tuple(rollouts))


@dataclass(frozen=True)
class LossReport:
    objective: float
    policy_term: float
    kl_term: float
    token_count: int
    clip_fraction: float
    zero_adv_fraction: float

    def to_record(self):
        return {
            "objective": self.objective,
            "policy_term": self.policy_term,
            "kl_term": self.kl_term,
            "token_count": self.token_count,
            "clip_fraction": self.clip_fraction,
            "zero_adv_fraction": self.zero_adv_fraction,
        }


def reward_std(rewards: Sequence[float]) -> float:
    """Population standard deviation."""
    n = len(rewards)
    mean = math.fsum(rewards) / n
    return math.sqrt(math.fsum((r - mean) ** 2 for r in rewards) / n)


def group_advantages(rewards, eps_std=DEFAULT_EPS_STD):
    """
    Standardize rewards within a group: ``(r - mean) / std`` with the
    population std. A group whose std is below ``eps_std`` gets all-zero
    advantages.
    """
    rewards = [float(r) for r in rewards]
    if len(rewards) < 2:
        raise InvalidGroupError(f"a group needs at least 2 rewards, got {len(rewards)}")
    if eps_std <= 0:
        raise InvalidGroupError("eps_std must be positive")
    if not all(math.isfinite(r) for r in rewards):
        raise NumericDomainError("rewards must be finite")

    n = len(rewards)
    mean = math.fsum(rewards) / n
    std = math.sqrt(math.fsum((r - mean) ** 2 for r in rewards) / n)
    if std < eps_std:
        return AdvantageVector((0.0,) * n)
    return AdvantageVector(tuple((r - mean) / std for r in rewards))


def k3_kl(logp_cur, logp_ref):
    """
    The k3 estimator ``r - log r - 1`` with ``r = pi_ref / pi_cur``, evaluated
    from log-probabilities. Never negative.
    """
    if not (math.isfinite(logp_cur) and math.isfinite(logp_ref)):
        raise NumericDomainError(f"non-finite log-probability ({logp_cur}, {logp_ref})")
    d = logp_ref - logp_cur
    # expm1(d) - d == exp(d) - d - 1, accurate near d = 0
    return max(0.0, math.expm1(d) - d)


def clipped_token_term(ratio, advantage, eps_clip):
    """``min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)``."""
    clipped = min(max(ratio, 1.0 - eps_clip), 1.0 + eps_clip)
    return min(ratio * advantage, clipped * advantage)


def is_clip_bound(ratio, advantage, eps_clip):
    """
    True when the clipped branch is the active minimum and differs from the
    unclipped one. Such a token contributes no gradient.
    """
    return ((advantage > 0 and ratio > 1.0 + eps_clip)
            or (advantage < 0 and ratio < 1.0 - eps_clip))


def mask_overlength(group, adv, max_tokens):
    """
    Zero the advantage of every rollout longer than ``max_tokens`` or flagged
    as truncated.
    """
    if max_tokens <= 0:
        raise InvalidGroupError("max_tokens must be positive")
    if len(adv) != group.size:
        raise InvalidGroupError("advantage vector does not match the group")
    values = tuple(
        0.0 if (len(r) > max_tokens or r.truncated) else a
        for r, a in zip(group.rollouts, adv)
    )
    return AdvantageVector(values)


def token_weights(groups, aggregation="token"):
    """
    The weight of every token of each rollout in the batch average, as a list
    (per group) of lists (per rollout) of floats.

    ``token``: every token of the batch weighs ``1 / total_tokens``.
    ``sequence``: each response is averaged over its own tokens, then over its
    group, then over groups.
    """
    if not groups:
        raise InvalidBatchError("empty batch")
    total = sum(len(r) for g in groups for r in g.rollouts)
    if total == 0:
        raise InvalidBatchError("batch contains no tokens")
    if aggregation == "token":
        return [[1.0 / total] * g.size for g in groups]
    if aggregation == "sequence":
        n_groups = len(groups)
        return [[(1.0 / (n_groups * g.size * len(r))) if len(r) else 0.0 for r in g.rollouts]
                for g in groups]
    raise InvalidBatchError(f"unknown aggregation {aggregation!r}")


def batch_objective(groups, cfg):
    """
    Evaluate the clipped group objective over a batch.

    ``objective = sum_w clipped_token_term(ratio, A, eps) - beta * sum_w k3``
    where ``sum_w`` is the token-weighted sum given by ``cfg.loss_aggregation``
    (token-level mean by default) and ratios are per token,
    ``exp(logp_cur - logp_old)``.

    Every group must carry its (already masked) advantages. With
    ``cfg.beta == 0`` the KL term does not enter the objective; it is still
    reported when reference log-probabilities are available.
    """
    groups = list(groups)
    if not groups:
        raise InvalidBatchError("empty batch")
    for g in groups:
        if g.advantages is None:
            raise InvalidBatchError(f"group {g.task_id} has no advantages")
    weights = token_weights(groups, cfg.loss_aggregation)

    have_ref = all(r.logp_ref is not None for g in groups for r in g.rollouts)
    if cfg.beta > 0 and not have_ref:
        raise InvalidBatchError("beta > 0 needs reference log-probabilities on every rollout")

    policy_terms = []
    kl_terms = []
    n_tokens = 0
    n_clipped = 0
    n_rollouts = 0
    n_zero_adv = 0
    for g, group_weights in zip(groups, weights):
        for rollout, adv, w in zip(g.rollouts, g.advantages, group_weights):
            n_rollouts += 1
            n_zero_adv += (adv == 0.0)
            for t in range(len(rollout)):
                ratio = math.exp(rollout.logp_cur[t] - rollout.logp_old[t])
                policy_terms.append(w * clipped_token_term(ratio, adv, cfg.eps_clip))
                n_clipped += is_clip_bound(ratio, adv, cfg.eps_clip)
                if have_ref:
                    kl_terms.append(w * k3_kl(rollout.logp_cur[t], rollout.logp_ref[t]))
                n_tokens += 1

    policy_term = math.fsum(policy_terms)
    kl_term = math.fsum(kl_terms) if have_ref else 0.0
    return LossReport(
        objective=policy_term - cfg.beta * kl_term,
        policy_term=policy_term,
        kl_term=kl_term,
        token_count=n_tokens,
        clip_fraction=n_clipped / n_tokens,
        zero_adv_fraction=n_zero_adv / n_rollouts,
    )


def prepare_group(group, cfg):
    """Compute and mask the advantages of a freshly rewarded group."""
    adv = group_advantages(group.rewards, cfg.eps_std)
    adv = mask_overlength(group, adv, cfg.max_response_tokens)
    if adv.all_zero:
        logger.debug("group %s contributes no gradient", group.task_id)
    return group.with_advantages(adv)
