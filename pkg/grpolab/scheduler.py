"""
Two-stage curriculum: math-only batches in stage 1, math and code mixed in
stage 2.
"""
import math
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ExhaustedPoolError, InvalidInputError

logger = logging.getLogger(__name__)

STAGE_1 = 1
STAGE_2 = 2

STRATEGIES = ("staged", "mixed", "math_only", "code_only")
TRANSITIONS = ("fixed_steps", "reward_plateau")


@dataclass(frozen=True)
class StagePlan:
    """
    ``strategy`` selects the curriculum: ``staged`` (math, then math + code),
    ``mixed`` (math + code from the first step), ``math_only`` or ``code_only``.
    """
    strategy: str = "staged"
    stage1_steps: int = 840
    stage2_mix_ratio: float = 0.5
    transition: str = "fixed_steps"
    plateau_window: int = 50
    plateau_tolerance: float = 1e-4

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidInputError(f"unknown strategy {self.strategy!r}")
        if self.transition not in TRANSITIONS:
            raise InvalidInputError(f"unknown transition {self.transition!r}")
        if self.stage1_steps < 0:
            raise InvalidInputError("stage1_steps must be non-negative")
        if not 0.0 <= self.stage2_mix_ratio <= 1.0:
            raise InvalidInputError("stage2_mix_ratio must lie in [0, 1]")
        if self.plateau_window < 2:
            raise InvalidInputError("plateau_window must be at least 2")


def window_slope(values):
    """Least-squares slope of ``values`` against 0, 1, 2, ..."""
    y = np.asarray(values, dtype=np.float64)
    x = np.arange(len(y), dtype=np.float64)
    x -= x.mean()
    return float(np.dot(x, y - y.mean()) / np.dot(x, x))


def plateau_reached(reward_history, window, tolerance):
    """
    True once any ``window``-long stretch of the history had a slope below
    ``tolerance``. Latched: extending the history never makes it False again.
    """
    history = list(reward_history)
    for end in range(window, len(history) + 1):
        if window_slope(history[end - window:end]) < tolerance:
            return True
    return False


def stage_of(step, plan, reward_history=()):
    """
    The stage of ``step``.

    ``fixed_steps``: stage 1 for ``step < stage1_steps``. ``reward_plateau``:
    stage 1 until the per-step mean reward plateaus; a history shorter than the
    window stays in stage 1.
    """
    if step < 0:
        raise InvalidInputError("step must be non-negative")
    if plan.strategy == "mixed" or plan.strategy == "code_only":
        return STAGE_2
    if plan.strategy == "math_only":
        return STAGE_1
    if plan.transition == "fixed_steps":
        return STAGE_1 if step < plan.stage1_steps else STAGE_2
    if plateau_reached(reward_history, plan.plateau_window, plan.plateau_tolerance):
        return STAGE_2
    return STAGE_1


def code_ratio(plan, stage):
    """Fraction of code tasks in a batch of ``stage`` under ``plan``."""
    if stage == STAGE_1:
        return 0.0
    if plan.strategy == "code_only":
        return 1.0
    return plan.stage2_mix_ratio


def code_count(stage, batch_size, ratio):
    if stage == STAGE_1:
        return 0
    # half-up rounding
    return int(math.floor(ratio * batch_size + 0.5))


def compose_batch(stage, math_pool, code_pool, batch_size, ratio, seed):
    """
    Draw a batch of task ids without replacement.

    Stage 1 batches are all math; stage 2 batches hold ``round(ratio * batch_size)``
    code tasks and math tasks for the rest. The order is shuffled; the result
    depends only on the arguments.

    Raises:
        ExhaustedPoolError: a pool has fewer tasks than its share of the batch.
    """
    if batch_size < 1:
        raise InvalidInputError("batch_size must be positive")
    if stage not in (STAGE_1, STAGE_2):
        raise InvalidInputError(f"unknown stage {stage!r}")
    if not 0.0 <= ratio <= 1.0:
        raise InvalidInputError("ratio must lie in [0, 1]")
    math_pool = sorted(math_pool)
    code_pool = sorted(code_pool)
    n_code = code_count(stage, batch_size, ratio)
    n_math = batch_size - n_code
    if n_math > len(math_pool):
        raise ExhaustedPoolError(f"need {n_math} math tasks, {len(math_pool)} available")
    if n_code > len(code_pool):
        raise ExhaustedPoolError(f"need {n_code} code tasks, {len(code_pool)} available")

    rng = np.random.default_rng(seed)
    picked = [math_pool[i] for i in rng.choice(len(math_pool), n_math, replace=False)]
    picked += [code_pool[i] for i in rng.choice(len(code_pool), n_code, replace=False)]
    return [picked[i] for i in rng.permutation(len(picked))]
