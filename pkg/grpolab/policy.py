"""
A position-indexed categorical token policy, the synthetic task environment it
is trained on, and the analytic gradient of the group objective with respect
to its logits.

Token 0 is the terminator. A response is sampled one position at a time from
``softmax(logits[position])`` until the terminator is drawn or ``max_len``
tokens have been produced (the response is then truncated).
"""
import math
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import InvalidInputError
from .grpo_kernel import Rollout, batch_objective, is_clip_bound, token_weights

logger = logging.getLogger(__name__)

STOP = 0
DOMAINS = ("math", "code")


@dataclass
class CategoricalPolicy:
    """
    ``logits[position, token]``; the context state is the position only.
    """
    logits: np.ndarray

    def __post_init__(self):
        self.logits = np.array(self.logits, dtype=np.float64)
        if self.logits.ndim != 2:
            raise InvalidInputError("logits must be a (max_len, vocab_size) table")
        if self.vocab_size < 2:
            raise InvalidInputError("vocab_size must be at least 2")
        if self.max_len < 1:
            raise InvalidInputError("max_len must be at least 1")
        if not np.all(np.isfinite(self.logits)):
            raise InvalidInputError("logits must be finite")

    @classmethod
    def uniform(cls, vocab_size, max_len):
        return cls(np.zeros((max_len, vocab_size)))

    @classmethod
    def random(cls, vocab_size, max_len, scale, seed):
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, scale, size=(max_len, vocab_size)))

    @property
    def vocab_size(self):
        return self.logits.shape[1]

    @property
    def max_len(self):
        return self.logits.shape[0]

    def log_softmax(self):
        shifted = self.logits - self.logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def probs(self):
        return np.exp(self.log_softmax())

    def copy(self):
        return CategoricalPolicy(self.logits.copy())

    def token_logps(self, tokens):
        """Log-probability of each token at its position."""
        tokens = np.asarray(tokens, dtype=np.int64)
        self.check_tokens(tokens)
        if len(tokens) == 0:
            return ()
        return tuple(self.log_softmax()[np.arange(len(tokens)), tokens].tolist())

    def check_tokens(self, tokens):
        if len(tokens) > self.max_len:
            raise InvalidInputError(f"{len(tokens)} tokens exceed max_len {self.max_len}")
        if len(tokens) and (min(tokens) < 0 or max(tokens) >= self.vocab_size):
            raise InvalidInputError(f"token outside the vocabulary of size {self.vocab_size}")


@dataclass(frozen=True)
class SyntheticTask:
    """
    A task is solved by any response containing ``target`` as a contiguous
    run of tokens. An empty target is solved by every response.
    """
    id: str
    domain: str
    target: Tuple[int, ...]
    intrinsic_difficulty: float

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(int(t) for t in self.target))
        if self.domain not in DOMAINS:
            raise InvalidInputError(f"unknown domain {self.domain!r}")
        if STOP in self.target:
            raise InvalidInputError("a target cannot contain the terminator")
        if not 0.0 <= self.intrinsic_difficulty <= 1.0:
            raise InvalidInputError("intrinsic_difficulty must lie in [0, 1]")


@dataclass(frozen=True)
class PoolSpec:
    n_math: int = 64
    n_code: int = 64
    trivial_fraction: float = 0.0
    min_target_len: int = 1
    max_target_len: int = 1
    master_sequence: Tuple[int, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "master_sequence", tuple(self.master_sequence))


def make_task(task_id, domain, target, max_len):
    if len(target) > max_len:
        raise InvalidInputError(f"task {task_id}: target longer than max_len")
    return SyntheticTask(task_id, domain, tuple(target), len(target) / max_len)


def make_task_pool(spec, vocab_size, max_len):
    """
    Generate the math and code task pools. Targets are contiguous pieces of the
    master sequence, so one policy can learn to solve all of them at once.
    A ``trivial_fraction`` share of each domain gets an empty target.

    Returns:
        ``(math_tasks, code_tasks)``, two lists of :py:class:`SyntheticTask`.
    """
    master = spec.master_sequence or tuple(range(1, vocab_size))
    rng = np.random.default_rng(spec.seed)
    pools = []
    for domain, count in (("math", spec.n_math), ("code", spec.n_code)):
        n_trivial = int(round(spec.trivial_fraction * count))
        trivial = np.zeros(count, dtype=bool)
        trivial[rng.permutation(count)[:n_trivial]] = True
        tasks = []
        for i in range(count):
            if trivial[i]:
                target = ()
            else:
                length = int(rng.integers(spec.min_target_len, spec.max_target_len + 1))
                start = int(rng.integers(0, len(master) - length + 1))
                target = master[start:start + length]
            tasks.append(make_task(f"{domain}-{i:04d}", domain, target, max_len))
        pools.append(tasks)
    logger.info("task pool: %d math, %d code", len(pools[0]), len(pools[1]))
    return pools[0], pools[1]


def sample_rollout(policy, task, seed, ref_policy=None):
    """
    Sample one response autoregressively.

    Deterministic given ``seed`` (an int or ``numpy.random.SeedSequence``).
    ``logp_old`` and ``logp_cur`` both hold the sampling log-probabilities;
    ``logp_ref`` is filled in when a reference policy is given.
    """
    if any(t >= policy.vocab_size for t in task.target):
        raise InvalidInputError(f"task {task.id} uses tokens outside the vocabulary")
    rng = np.random.default_rng(seed)
    logp = policy.log_softmax()
    cdf = np.cumsum(np.exp(logp), axis=1)

    tokens = []
    logps = []
    truncated = True
    for pos in range(policy.max_len):
        u = rng.random() * cdf[pos, -1]
        tok = min(int(np.searchsorted(cdf[pos], u, side='right')), policy.vocab_size - 1)
        tokens.append(tok)
        logps.append(float(logp[pos, tok]))
        if tok == STOP:
            truncated = False
            break

    logp_ref = ref_policy.token_logps(tokens) if ref_policy is not None else None
    return Rollout(tuple(tokens), tuple(logps), tuple(logps), logp_ref, truncated)


def grade_synthetic(task, rollout):
    """True iff ``task.target`` occurs as a contiguous run of ``rollout.tokens``."""
    target = task.target
    tokens = rollout.tokens
    n = len(target)
    if n == 0:
        return True
    return any(tokens[i:i + n] == target for i in range(len(tokens) - n + 1))


def rescore(policy, rollout):
    """The same rollout with ``logp_cur`` re-evaluated under ``policy``."""
    return Rollout(rollout.tokens, rollout.logp_old, policy.token_logps(rollout.tokens),
                   rollout.logp_ref, rollout.truncated)


def rescore_groups(groups, policy):
    return [g.with_rollouts(rescore(policy, r) for r in g.rollouts) for g in groups]


def objective_gradient(groups, policy, cfg):
    """
    Analytic gradient of :py:func:`grpolab.grpo_kernel.batch_objective` with
    respect to ``policy.logits``.

    Per token, ``d logp / d logits[pos] = onehot(token) - softmax(logits[pos])``.
    The surrogate contributes ``w * ratio * A`` through that derivative unless
    the clipped branch is the active minimum (then nothing); at the clip
    boundary itself the unclipped branch is taken. The KL penalty contributes
    ``w * beta * (pi_ref / pi - 1)``.

    Returns:
        ``numpy.ndarray`` with the shape of ``policy.logits``.
    """
    groups = list(groups)
    weights = token_weights(groups, cfg.loss_aggregation)
    grad = np.zeros_like(policy.logits)

    pos, tok, old, ref, adv, w = [], [], [], [], [], []
    for g, group_weights in zip(groups, weights):
        if g.advantages is None:
            raise InvalidInputError(f"group {g.task_id} has no advantages")
        for rollout, a, wt in zip(g.rollouts, g.advantages, group_weights):
            try:
                policy.check_tokens(rollout.tokens)
            except InvalidInputError as ex:
                raise InvalidInputError(f"group {g.task_id}: {ex}") from ex
            n = len(rollout)
            pos.extend(range(n))
            tok.extend(rollout.tokens)
            old.extend(rollout.logp_old)
            if cfg.beta > 0:
                if rollout.logp_ref is None:
                    raise InvalidInputError("beta > 0 needs reference log-probabilities")
                ref.extend(rollout.logp_ref)
            adv.extend([a] * n)
            w.extend([wt] * n)

    if not pos:
        return grad
    pos = np.asarray(pos, dtype=np.int64)
    tok = np.asarray(tok, dtype=np.int64)
    adv = np.asarray(adv)
    w = np.asarray(w)

    logp = policy.log_softmax()
    probs = np.exp(logp)
    lp = logp[pos, tok]
    ratio = np.exp(lp - np.asarray(old))
    bound = np.array([is_clip_bound(r, a, cfg.eps_clip) for r, a in zip(ratio, adv)], dtype=bool)
    coef = np.where(bound, 0.0, ratio * adv)
    if cfg.beta > 0:
        coef = coef + cfg.beta * np.expm1(np.asarray(ref) - lp)
    coef = coef * w

    np.add.at(grad, (pos, tok), coef)
    per_position = np.bincount(pos, weights=coef, minlength=policy.max_len)
    grad -= per_position[:, None] * probs
    return grad


def policy_objective(groups, policy, cfg):
    """Objective of ``groups`` re-scored under ``policy`` (the finite-difference target)."""
    return batch_objective(rescore_groups(groups, policy), cfg).objective


def finite_difference_gradient(groups, policy, cfg, h=1e-5):
    """Central finite differences of :py:func:`policy_objective`, entry by entry."""
    grad = np.zeros_like(policy.logits)
    for idx in np.ndindex(*policy.logits.shape):
        plus = policy.copy()
        minus = policy.copy()
        plus.logits[idx] += h
        minus.logits[idx] -= h
        grad[idx] = (policy_objective(groups, plus, cfg)
                     - policy_objective(groups, minus, cfg)) / (2 * h)
    return grad


def near_clip_boundary(groups, policy, cfg, tol=1e-3):
    """True if any token's ratio is within ``tol`` of ``1 +- eps_clip``."""
    for g in groups:
        for rollout in g.rollouts:
            for t, lp in enumerate(policy.token_logps(rollout.tokens)):
                ratio = math.exp(lp - rollout.logp_old[t])
                if min(abs(ratio - (1 + cfg.eps_clip)), abs(ratio - (1 - cfg.eps_clip))) < tol:
                    return True
    return False


def _prefix_transitions(target):
    """``next_state[j][v]``: matched prefix length after token ``v`` in state ``j``."""
    n = len(target)
    failure = [0] * n
    k = 0
    for i in range(1, n):
        while k and target[i] != target[k]:
            k = failure[k - 1]
        if target[i] == target[k]:
            k += 1
        failure[i] = k
    table = []
    for j in range(n):
        row = {}
        for v in set(target):
            k = j
            while k and target[k] != v:
                k = failure[k - 1]
            row[v] = k + 1 if target[k] == v else 0
        table.append(row)
    return table


def solve_probability(policy, task):
    """
    Exact probability that a rollout of ``policy`` solves ``task``, by dynamic
    programming over the matched prefix length of the target.
    """
    target = task.target
    n = len(target)
    if n == 0:
        return 1.0
    probs = policy.probs()
    table = _prefix_transitions(target)
    state = np.zeros(n)
    state[0] = 1.0
    solved = 0.0
    for pos in range(policy.max_len):
        p = probs[pos]
        other = max(0.0, 1.0 - p[STOP] - sum(p[v] for v in set(target)))
        nxt = np.zeros(n)
        for j in range(n):
            mass = state[j]
            if mass == 0.0:
                continue
            nxt[0] += mass * other
            for v, k in table[j].items():
                if k == n:
                    solved += mass * p[v]
                else:
                    nxt[k] += mass * p[v]
        state = nxt
    return float(solved)
