"""
Rule-based rewards: format reward, accuracy reward (math or code),
language-mixing penalty, and their sum.

    total = accuracy + format + penalty

With the default constants, accuracy is 0, 0.2 (partial) or 1, format is 0 or
0.2, and the penalty is -0.1 or 0, so every total lies in [-0.1, 1.2].
"""
import re
import math
import logging
import unicodedata
from dataclasses import dataclass

from .errors import InvalidInputError
from .verifiers import EQUIVALENT, PARTIAL, math_equivalent
from .sandbox import run_code_tests

logger = logging.getLogger(__name__)

OPEN_TAG = "<output>"
CLOSE_TAG = "</output>"

_CODE_FENCE = re.compile(r'```.*?(```|\Z)', re.DOTALL)
# inline $...$ follows the TeX-in-markdown convention: no space just inside the
# delimiters and no digit right after the closing one, so "$5 ... $10" is prose
_MATH_SPAN = re.compile(r'\$\$.*?\$\$|\$(?=[^\s$])[^$]*?(?<=\S)\$(?!\d)|\\\(.*?\\\)|\\\[.*?\\\]',
                        re.DOTALL)
# a Greek letter with no letter on either side is a variable, not a word
_GREEK_SYMBOL = re.compile(r'(?<![^\W\d_])[\u0370-\u03ff](?![^\W\d_])')


@dataclass(frozen=True)
class RewardConstants:
    full: float = 1.0
    partial: float = 0.2
    format: float = 0.2
    penalty: float = -0.1
    expected_script: str = "LATIN"
    mix_threshold: int = 5

    @property
    def accuracy_values(self):
        return (0.0, self.partial, self.full)

    @property
    def format_values(self):
        return (0.0, self.format)

    @property
    def penalty_values(self):
        return (self.penalty, 0.0)


DEFAULT_CONSTANTS = RewardConstants()


def _member(value, allowed):
    return any(math.isclose(value, a, rel_tol=0, abs_tol=1e-12) for a in allowed)


@dataclass(frozen=True)
class RewardBreakdown:
    accuracy: float
    format: float
    penalty: float
    total: float

    @classmethod
    def of(cls, accuracy, format, penalty, constants=DEFAULT_CONSTANTS):  # noqa: A002
        parts = cls(accuracy, format, penalty, float("nan"))
        return cls(accuracy, format, penalty, total_reward(parts, constants))

    def to_record(self, task_id=None):
        record = {"accuracy": self.accuracy, "format": self.format,
                  "penalty": self.penalty, "total": self.total}
        if task_id is not None:
            record = {"task_id": task_id, **record}
        return record


def format_reward(response, constants=DEFAULT_CONSTANTS):
    """
    Reward for a final answer written as ``<output>answer</output>``.

    The response must contain exactly one opening and one closing tag, in that
    order, with the closing tag as its last non-whitespace content.

    Returns:
        ``(score, extracted)``; ``extracted`` is the stripped text between the
        tags, or ``None`` when the format is not met.
    """
    if response.count(OPEN_TAG) != 1 or response.count(CLOSE_TAG) != 1:
        return 0.0, None
    start = response.index(OPEN_TAG)
    end = response.index(CLOSE_TAG)
    if end < start or response[end + len(CLOSE_TAG):].strip():
        return 0.0, None
    return constants.format, response[start + len(OPEN_TAG):end].strip()


def script_of(char):
    """
    The Unicode script of a letter, from its character name ("LATIN", "CJK",
    "GREEK", ...), or ``None`` for non-letters and mathematical letterlike symbols.
    """
    if not unicodedata.category(char).startswith("L"):
        return None
    name = unicodedata.name(char, "")
    if not name or name.startswith("MATHEMATICAL"):
        return None
    return name.split(" ", 1)[0]


def foreign_letter_count(response, expected_script="LATIN"):
    text = _CODE_FENCE.sub(" ", response)
    text = _MATH_SPAN.sub(" ", text)
    expected = expected_script.upper()
    if expected != "GREEK":
        text = _GREEK_SYMBOL.sub(" ", text)
    return sum(1 for c in text if script_of(c) not in (None, expected))


def mix_penalty(response, expected_script="LATIN", threshold=None, constants=DEFAULT_CONSTANTS):
    """
    Penalty for mixing languages: letters outside ``expected_script``, not
    counting digits, punctuation, symbols, math spans and fenced code.
    """
    threshold = constants.mix_threshold if threshold is None else threshold
    if foreign_letter_count(response, expected_script) >= threshold:
        return constants.penalty
    return 0.0


def math_accuracy(extracted, gold, verdict=None, constants=DEFAULT_CONSTANTS):
    """
    ``full`` for an equivalent answer, ``partial`` for a partial one, else 0.
    ``verdict`` is computed with :py:func:`grpolab.verifiers.math_equivalent`
    when not given.
    """
    if extracted is None:
        return 0.0
    if verdict is None:
        verdict = math_equivalent(extracted, gold)
    if verdict.kind == EQUIVALENT:
        return constants.full
    if verdict.kind == PARTIAL:
        return constants.partial
    return 0.0


def code_accuracy(results, constants=DEFAULT_CONSTANTS):
    """``full`` iff every test outcome passed."""
    results = list(results)
    if not results:
        raise InvalidInputError("no test outcomes to grade")
    passed = [r if isinstance(r, bool) else r.passed for r in results]
    return constants.full if all(passed) else 0.0


def total_reward(parts, constants=DEFAULT_CONSTANTS):
    """Sum of the components, each checked against its allowed values."""
    for name, allowed in (("accuracy", constants.accuracy_values),
                          ("format", constants.format_values),
                          ("penalty", constants.penalty_values)):
        value = getattr(parts, name)
        if not _member(value, allowed):
            raise InvalidInputError(f"{name} component {value} not in {allowed}")
    return parts.accuracy + parts.format + parts.penalty


def grade_response(response, task, constants=DEFAULT_CONSTANTS, exec_cfg=None):
    """
    Grade a full response against a curated task.

    ``task`` needs ``domain`` and either ``answer`` (math) or ``tests`` (code).
    For code tasks the extracted answer is the program.
    """
    fmt, extracted = format_reward(response, constants)
    penalty = mix_penalty(response, constants.expected_script, constants=constants)
    if task.domain == "math":
        accuracy = math_accuracy(extracted, task.answer, constants=constants)
    else:
        if extracted is None:
            accuracy = 0.0
        else:
            if exec_cfg is None:
                raise InvalidInputError("grading a code task needs an executor config")
            accuracy = code_accuracy(run_code_tests(extracted, task.tests, exec_cfg), constants)
    breakdown = RewardBreakdown.of(accuracy, fmt, penalty, constants)
    logger.debug("graded %s: %s", getattr(task, "id", "?"), breakdown)
    return breakdown


def synthetic_reward(correct, truncated, mode="binary", constants=DEFAULT_CONSTANTS):
    """
    Reward of a toy rollout. ``binary``: 1/0 correctness. ``shaped``: full
    accuracy credit plus the format reward when the response ended with the
    terminator.
    """
    if mode == "binary":
        return 1.0 if correct else 0.0
    parts = RewardBreakdown.of(constants.full if correct else 0.0,
                               0.0 if truncated else constants.format, 0.0, constants)
    return parts.total
