"""
Epoch-level history resampling.

During an epoch every rollout's correctness is tallied per task. At the epoch
boundary the dataset is rebuilt: tasks whose rollouts were all correct are
dropped; tasks with mixed outcomes, tasks with only incorrect outcomes, and
tasks that were never sampled are kept.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

from .errors import InvalidInputError
from .grpo_kernel import DEFAULT_EPS_STD, reward_std

logger = logging.getLogger(__name__)

DROPPED_EASY = "dropped-easy"
RETAINED_MIXED = "retained-mixed"
RETAINED_HARD = "retained-hard"
RETAINED_UNSAMPLED = "retained-unsampled"


@dataclass
class EpochLedger:
    """``counts[task_id] = (n_correct, n_incorrect)`` over one epoch."""
    epoch: int = 0
    counts: Dict[str, Tuple[int, int]] = field(default_factory=dict)

    def record(self, task_id, outcomes):
        """Add a group's outcomes in place."""
        outcomes = [bool(o) for o in outcomes]
        n_correct = sum(outcomes)
        correct, incorrect = self.counts.get(task_id, (0, 0))
        self.counts[task_id] = (correct + n_correct, incorrect + len(outcomes) - n_correct)

    def copy(self):
        return EpochLedger(self.epoch, dict(self.counts))

    def to_record(self):
        return {"epoch": self.epoch,
                "counts": {k: list(v) for k, v in sorted(self.counts.items())}}

    @classmethod
    def from_record(cls, record):
        counts = {}
        for task_id, pair in record.get("counts", {}).items():
            n_correct, n_incorrect = (int(x) for x in pair)
            if n_correct < 0 or n_incorrect < 0:
                raise InvalidInputError(f"negative count for task {task_id}")
            counts[str(task_id)] = (n_correct, n_incorrect)
        return cls(int(record.get("epoch", 0)), counts)


def record_group(ledger, task_id, outcomes):
    """Return a new ledger with ``outcomes`` (one bool per rollout) added for ``task_id``."""
    updated = ledger.copy()
    updated.record(task_id, outcomes)
    return updated


def decide(ledger, task_id):
    """The reason code for keeping or dropping one task."""
    n_correct, n_incorrect = ledger.counts.get(task_id, (0, 0))
    if n_correct + n_incorrect == 0:
        return RETAINED_UNSAMPLED
    if n_incorrect == 0:
        return DROPPED_EASY
    if n_correct == 0:
        return RETAINED_HARD
    return RETAINED_MIXED


def rebuild_decisions(ledger, dataset):
    return {task_id: decide(ledger, task_id) for task_id in sorted(dataset)}


def rebuild_dataset(ledger, dataset):
    """
    The task ids of ``dataset`` that survive the epoch recorded in ``ledger``.
    Only tasks with at least one correct and no incorrect outcome are removed.
    """
    decisions = rebuild_decisions(ledger, dataset)
    kept = frozenset(t for t, reason in decisions.items() if reason != DROPPED_EASY)
    if logger.isEnabledFor(logging.INFO):
        tally = {}
        for reason in decisions.values():
            tally[reason] = tally.get(reason, 0) + 1
        logger.info("epoch %d resampling: %d -> %d tasks %s",
                    ledger.epoch, len(decisions), len(kept), dict(sorted(tally.items())))
    return kept


def zero_advantage_fraction(batch, eps_std=DEFAULT_EPS_STD):
    """Fraction of groups whose reward std is below ``eps_std`` (so every advantage is zero)."""
    batch = list(batch)
    if not batch:
        raise InvalidInputError("empty batch")
    zero = sum(1 for g in batch if reward_std(g.rewards) < eps_std)
    return zero / len(batch)
