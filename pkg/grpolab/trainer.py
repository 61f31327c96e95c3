"""
The desk-scale training loop.

Each step composes a batch with the stage scheduler, samples ``group_size``
rollouts per task from a snapshot of the policy, rewards them, computes masked
group advantages, and takes one or more AdamW steps on the clipped group
objective. Per-step metrics are collected in a :py:class:`MetricsLog`.

An epoch is one pass over the active dataset: batches are drawn from the tasks
not yet served in the epoch, and the epoch ends when the unserved tasks can no
longer fill a batch. At that boundary the history-resampling rebuild runs (if
enabled) and the next epoch starts from the rebuilt dataset.

Every random draw is seeded from ``(seed, step, task, rollout)``, so a run is
fully determined by its config, independent of the number of workers.
"""
import csv
import math
import logging
from pathlib import Path
from dataclasses import dataclass, field, fields
from typing import List
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import json
from .errors import AbortStepError, ExhaustedPoolError, InvalidInputError
from .grpo_kernel import RolloutGroup, batch_objective, prepare_group
from .optim import AdamState, adam_step
from .policy import (CategoricalPolicy, make_task_pool, sample_rollout, grade_synthetic,
                     objective_gradient, rescore_groups, solve_probability)
from .resampling import EpochLedger, rebuild_dataset, zero_advantage_fraction
from .rewards import synthetic_reward
from .scheduler import STAGE_2, stage_of, code_ratio, compose_batch

logger = logging.getLogger(__name__)

COMPLETED = "completed"
EXHAUSTED = "exhausted"

# SeedSequence spawn-key prefixes, one per random stream
_BATCH_STREAM = 0
_ROLLOUT_STREAM = 1
_INIT_STREAM = 2

REQUIRED_COLUMNS = ("step", "stage", "mean_reward", "mean_len", "zero_adv_frac", "clip_frac")


@dataclass(frozen=True)
class MetricRecord:
    """
    One completed training step. ``mean_len_math`` / ``mean_len_code`` are NaN
    when the batch held no task of that domain.
    """
    step: int
    stage: int
    mean_reward: float
    mean_len: float
    zero_adv_frac: float
    clip_frac: float
    epoch: int = 0
    mean_accuracy: float = 0.0
    code_frac: float = 0.0
    dataset_size: int = 0
    mean_len_math: float = float("nan")
    mean_len_code: float = float("nan")
    objective: float = 0.0
    kl: float = 0.0
    pool_accuracy: float = float("nan")

    def to_record(self):
        return {f.name: json.finite_or_none(getattr(self, f.name)) for f in fields(self)}


COLUMNS = tuple(f.name for f in fields(MetricRecord))


def _csv_value(value):
    if isinstance(value, float) and math.isnan(value):
        return ""
    return repr(value) if isinstance(value, float) else str(value)


@dataclass
class MetricsLog:
    """Per-step records, in strictly increasing step order, and the run status."""
    records: List[MetricRecord] = field(default_factory=list)
    status: str = COMPLETED

    def append(self, record):
        if self.records and record.step <= self.records[-1].step:
            raise InvalidInputError(
                f"step {record.step} does not follow step {self.records[-1].step}")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    def write_csv(self, f, columns=COLUMNS):
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for r in self.records:
            writer.writerow({c: _csv_value(getattr(r, c)) for c in columns})

    def write_jsonl(self, f):
        for r in self.records:
            f.write(json.dumps(r.to_record(), sort_keys=True) + "\n")

    def to_record(self):
        return {"status": self.status, "steps": len(self.records),
                "records": [r.to_record() for r in self.records]}

    @classmethod
    def read_jsonl(cls, f):
        log = cls()
        for line in f:
            if line.strip():
                data = json.loads(line)
                log.append(MetricRecord(**{
                    k: float("nan") if v is None else v for k, v in data.items()}))
        return log


def steps_to_reward(log, threshold, column="pool_accuracy"):
    """The first step whose ``column`` reaches ``threshold``, or ``None``."""
    for r in log.records:
        value = getattr(r, column)
        if not math.isnan(value) and value >= threshold:
            return r.step
    return None


def rollout_seed(master_seed, step, task_index, rollout_index):
    return np.random.SeedSequence(entropy=master_seed,
                                  spawn_key=(_ROLLOUT_STREAM, step, task_index, rollout_index))


def batch_seed(master_seed, step):
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(_BATCH_STREAM, step))


def sample_groups(policy, tasks, step, cfg, ref_policy=None, pool=None):
    """
    Sample and reward ``group_size`` rollouts for each task.

    Returns:
        ``(groups, outcomes)``: one :py:class:`RolloutGroup` (advantages
        prepared) and one tuple of correctness flags per task.
    """
    jobs = [(i, j) for i in range(len(tasks)) for j in range(cfg.group_size)]

    def run(job):
        i, j = job
        return sample_rollout(policy, tasks[i], rollout_seed(cfg.seed, step, i, j), ref_policy)

    if pool is not None:
        rollouts = list(pool.map(run, jobs))
    else:
        rollouts = [run(job) for job in jobs]

    groups = []
    outcomes = []
    for i, task in enumerate(tasks):
        mine = rollouts[i * cfg.group_size:(i + 1) * cfg.group_size]
        correct = tuple(grade_synthetic(task, r) for r in mine)
        rewards = tuple(synthetic_reward(c, r.truncated, cfg.reward_mode, cfg.rewards)
                        for c, r in zip(correct, mine))
        groups.append(prepare_group(RolloutGroup(task.id, tuple(mine), rewards), cfg))
        outcomes.append(correct)
    return groups, outcomes


def update_policy(policy, adam_state, groups, cfg):
    """
    Take ``cfg.updates_per_step`` AdamW steps on the batch objective, starting
    from the policy the groups were sampled from.

    Returns:
        ``(policy, adam_state, clip_frac, objective, kl, aborted)``. The clip
        fraction is averaged over the updates; objective and KL are those of
        the sampling policy.
    """
    clip_fracs = []
    objective = kl = 0.0
    aborted = False
    for u in range(cfg.updates_per_step):
        current = groups if u == 0 else rescore_groups(groups, policy)
        report = batch_objective(current, cfg)
        if u == 0:
            objective, kl = report.objective, report.kl_term
        clip_fracs.append(report.clip_fraction)
        grad = objective_gradient(current, policy, cfg)
        try:
            logits, adam_state = adam_step(policy.logits, -grad, adam_state, cfg.adam)
        except AbortStepError as ex:
            logger.warning("optimizer step aborted: %s", ex)
            aborted = True
            break
        policy = CategoricalPolicy(logits)
    return policy, adam_state, math.fsum(clip_fracs) / len(clip_fracs), objective, kl, aborted


def initial_policy(cfg):
    if cfg.init_scale > 0:
        seed = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(_INIT_STREAM,))
        return CategoricalPolicy.random(cfg.vocab_size, cfg.max_len, cfg.init_scale, seed)
    return CategoricalPolicy.uniform(cfg.vocab_size, cfg.max_len)


def _mean(values):
    values = list(values)
    return math.fsum(values) / len(values) if values else float("nan")


def train(cfg, policy=None, pools=None):
    """
    Run ``cfg.steps`` training steps.

    Args:
        cfg:
            :py:class:`grpolab.config.TrainerConfig`
        policy:
            Starting policy; by default uniform (or random with ``init_scale``).
        pools:
            ``(math_tasks, code_tasks)``; by default generated from ``cfg.pool``.

    Returns:
        :py:class:`MetricsLog`. Its status is ``exhausted`` if the dataset
        could no longer fill a batch, otherwise ``completed``.
    """
    math_tasks, code_tasks = pools if pools is not None else make_task_pool(
        cfg.pool, cfg.vocab_size, cfg.max_len)
    tasks = {t.id: t for t in list(math_tasks) + list(code_tasks)}
    if not tasks:
        raise InvalidInputError("task pools are empty")
    all_ids = frozenset(tasks)

    policy = policy if policy is not None else initial_policy(cfg)
    ref_policy = policy.copy() if cfg.beta > 0 else None
    adam_state = AdamState.zeros_like(policy.logits)

    log = MetricsLog()
    dataset = all_ids
    unserved = set(dataset)
    ledger = EpochLedger(epoch=0)
    reward_history = []
    previous_stage = None

    executor = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        for step in range(cfg.steps):
            stage = stage_of(step, cfg.stage_plan, reward_history)
            if stage != previous_stage:
                logger.info("step %d: entering stage %d", step, stage)
                previous_stage = stage
            ratio = code_ratio(cfg.stage_plan, stage)

            try:
                batch = _compose(stage, unserved, tasks, cfg, ratio, step)
            except ExhaustedPoolError:
                if cfg.resampling_enabled:
                    base = all_ids if cfg.readmit_dropped else dataset
                    dataset = rebuild_dataset(ledger, base)
                logger.info("epoch %d finished at step %d; dataset now %d tasks",
                            ledger.epoch, step, len(dataset))
                ledger = EpochLedger(epoch=ledger.epoch + 1)
                unserved = set(dataset)
                try:
                    batch = _compose(stage, unserved, tasks, cfg, ratio, step)
                except ExhaustedPoolError as ex:
                    logger.info("dataset exhausted at step %d: %s", step, ex)
                    log.status = EXHAUSTED
                    break

            unserved.difference_update(batch)
            batch_tasks = [tasks[t] for t in batch]
            groups, outcomes = sample_groups(policy, batch_tasks, step, cfg, ref_policy, executor)
            for task_id, correct in zip(batch, outcomes):
                ledger.record(task_id, correct)

            policy, adam_state, clip_frac, objective, kl, _ = update_policy(
                policy, adam_state, groups, cfg)

            record = _record(step, stage, ledger.epoch, len(dataset), batch_tasks, groups,
                             outcomes, clip_frac, objective, kl, cfg,
                             _pool_accuracy(policy, tasks))
            log.append(record)
            reward_history.append(record.mean_reward)
            logger.info("step %d stage %d reward %.4f len %.2f zero-adv %.3f",
                        step, stage, record.mean_reward, record.mean_len, record.zero_adv_frac)
    finally:
        if executor is not None:
            executor.shutdown()
    return log


def _compose(stage, unserved, tasks, cfg, ratio, step):
    math_ids = [t for t in unserved if tasks[t].domain == "math"]
    code_ids = [t for t in unserved if tasks[t].domain == "code"]
    return compose_batch(stage, math_ids, code_ids, cfg.tasks_per_step, ratio,
                         batch_seed(cfg.seed, step))


def _pool_accuracy(policy, tasks):
    return _mean(solve_probability(policy, tasks[t]) for t in sorted(tasks))


def _record(step, stage, epoch, dataset_size, batch_tasks, groups, outcomes, clip_frac,
            objective, kl, cfg, pool_accuracy):
    lengths = {"math": [], "code": []}
    for task, g in zip(batch_tasks, groups):
        lengths[task.domain].extend(len(r) for r in g.rollouts)
    n_code = sum(t.domain == "code" for t in batch_tasks)
    return MetricRecord(
        step=step,
        stage=stage,
        mean_reward=_mean(r for g in groups for r in g.rewards),
        mean_len=_mean(lengths["math"] + lengths["code"]),
        zero_adv_frac=zero_advantage_fraction(groups, cfg.eps_std),
        clip_frac=clip_frac,
        epoch=epoch,
        mean_accuracy=_mean(float(c) for correct in outcomes for c in correct),
        code_frac=n_code / len(batch_tasks),
        dataset_size=dataset_size,
        mean_len_math=_mean(lengths["math"]),
        mean_len_code=_mean(lengths["code"]),
        objective=objective,
        kl=kl,
        pool_accuracy=pool_accuracy,
    )


def write_run(log, out_dir, provenance):
    """Write ``metrics.csv``, ``metrics.jsonl`` and ``summary.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "metrics.csv", "w", newline="") as f:
        log.write_csv(f)
    with open(out_dir / "metrics.jsonl", "w") as f:
        log.write_jsonl(f)
    summary = dict(provenance)
    summary.update(status=log.status, steps=len(log),
                   final=log.records[-1].to_record() if log.records else None,
                   stage2_first_step=next((r.step for r in log if r.stage == STAGE_2), None))
    with open(out_dir / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return out_dir