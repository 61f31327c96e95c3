"""
From raw JSON-lines records to verified, difficulty-tagged training tasks.

Stages, each a plain function that can be used on its own:

1. :py:func:`clean_sample`      map field names, strip URLs, normalize whitespace
2. :py:func:`filter_unsuitable` rule-based rejection of unsuitable problems
3. :py:func:`render_prompt`     fill the prompt template
4. :py:func:`verify_sample`     check external solutions against the gold answer or tests
5. :py:func:`difficulty_bucket` easy / medium / hard from pass@1 and pass@k

:py:func:`curate` runs them all and produces a rejection report.
"""
import re
import math
import logging
import subprocess
from pathlib import Path
from dataclasses import dataclass, field
from typing import Optional, Tuple
from concurrent.futures import ThreadPoolExecutor

from . import json
from .errors import InvalidInputError, InvalidTemplateError, ExecutorEnvironmentError
from .verifiers import EQUIVALENT, math_equivalent
from .sandbox import MAX_TESTS, TestCase, run_code_tests
from .rewards import format_reward

logger = logging.getLogger(__name__)

# Rejection reasons
MALFORMED = "malformed"
MULTI_QUESTION = "multi_question"
PROOF_BASED = "proof_based"
NEEDS_IMAGE_OR_TABLE = "needs_image_or_table"
ENV_DEPENDENT = "env_dependent"
FILE_IO = "file_io"
NETWORK = "network"
UNVERIFIABLE = "unverifiable"
AMBIGUOUS = "ambiguous"

FILTER_REASONS = (MULTI_QUESTION, PROOF_BASED, NEEDS_IMAGE_OR_TABLE,
                  ENV_DEPENDENT, FILE_IO, NETWORK)

EASY = "easy"
MEDIUM = "medium"
HARD = "hard"

PLACEHOLDERS = ("{question}", "{q}")

_FIELD_ALIASES = {
    "question": ("question", "problem", "prompt", "query", "description"),
    "answer": ("answer", "final_answer", "gold", "solution"),
    "tests": ("tests", "test_cases"),
    "domain": ("domain", "type", "category"),
    "starter_fn": ("starter_fn", "fn_name", "function_name"),
    "solver_outputs": ("solver_outputs", "candidates", "responses"),
}

_URL = re.compile(r'(?:\b[a-zA-Z][a-zA-Z0-9+.\-]*://|\bwww\.)\S+')

_MATH_RULES = (
    (MULTI_QUESTION, re.compile(r'\?[^?]*\?|(?:^|\s)\(a\).*\s\(b\)|(?:^|\s)\(i\).*\s\(ii\)',
                                re.IGNORECASE | re.DOTALL)),
    (PROOF_BASED, re.compile(r'\bprove\b|\bproof\b|\bshow that\b', re.IGNORECASE)),
    (NEEDS_IMAGE_OR_TABLE, re.compile(
        r'!\[|<img|\\includegraphics|\[asy\]|\\begin\{tabular\}'
        r'|\b(?:figure|diagram|picture)\b'
        r'|\btable (?:below|above)\b|\bshown (?:below|above)\b', re.IGNORECASE)),
)

_CODE_RULES = (
    (ENV_DEPENDENT, re.compile(
        r'\b(?:gpu|cuda|windows registry|docker|pip install'
        r'|environment variable|operating system)\b',
        re.IGNORECASE)),
    (FILE_IO, re.compile(
        r'\b(?:read|write|open|save|load)\b[^.]{0,30}\bfiles?\b|\bfopen\b|\bwith open\b|\bopen\(',
        re.IGNORECASE)),
    (NETWORK, re.compile(
        r'\b(?:socket|http|https|urllib|requests\.(?:get|post)|network|api endpoint|download)\b',
        re.IGNORECASE)),
    (NEEDS_IMAGE_OR_TABLE, re.compile(r'!\[|<img|\\includegraphics', re.IGNORECASE)),
)


@dataclass(frozen=True)
class DifficultyThresholds:
    t_easy: float = 0.7
    t_hard: float = 0.3
    k: int = 8

    def to_record(self):
        return {"t_easy": self.t_easy, "t_hard": self.t_hard, "k": self.k}


@dataclass(frozen=True)
class Rejection:
    reason: str
    detail: str = ""

    def to_record(self):
        return {"reason": self.reason, "detail": self.detail}


@dataclass(frozen=True)
class Keep:
    pass


@dataclass(frozen=True)
class Verified:
    n_outputs: int
    n_correct: int
    pass1: float
    passk: float


@dataclass(frozen=True)
class RawSample:
    question: str
    domain: str
    answer: Optional[str] = None
    tests: Tuple[TestCase, ...] = ()
    starter_fn: Optional[str] = None
    solver_outputs: Tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)
    provenance: str = ""
    id: Optional[str] = None


@dataclass(frozen=True)
class Task:
    """A curated training task. Code tasks carry ``tests``; math tasks carry ``answer``."""
    id: str
    domain: str
    prompt: str
    answer: Optional[str] = None
    tests: Tuple[TestCase, ...] = ()
    difficulty: str = MEDIUM
    pass1: float = 0.0
    passk: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "tests", tuple(self.tests))
        if self.domain not in ("math", "code"):
            raise InvalidInputError(f"task {self.id}: unknown domain {self.domain!r}")
        if self.domain == "code" and not 1 <= len(self.tests) <= MAX_TESTS:
            raise InvalidInputError(f"task {self.id}: code tasks need 1 to {MAX_TESTS} tests")
        if self.domain == "math" and self.answer is None:
            raise InvalidInputError(f"task {self.id}: math tasks need an answer")
        if self.difficulty not in (EASY, MEDIUM, HARD):
            raise InvalidInputError(f"task {self.id}: unknown difficulty {self.difficulty!r}")

    def to_record(self):
        record = {"id": self.id, "domain": self.domain, "prompt": self.prompt}
        if self.domain == "math":
            record["answer"] = self.answer
        else:
            record["tests"] = [t.to_record() for t in self.tests]
        record.update(difficulty=self.difficulty, pass1=self.pass1, passk=self.passk,
                      meta=self.meta)
        return record

    @classmethod
    def from_record(cls, record):
        tests = tuple(TestCase(t["input"], t["expected_output"]) for t in record.get("tests", []))
        return cls(id=str(record["id"]), domain=record["domain"],
                   prompt=record.get("prompt", ""),
                   answer=record.get("answer"), tests=tests,
                   difficulty=record.get("difficulty", MEDIUM),
                   pass1=float(record.get("pass1", 0.0)), passk=float(record.get("passk", 0.0)),
                   meta=dict(record.get("meta", {})))


def _normalize_text(text):
    return re.sub(r'\s+', ' ', _URL.sub(' ', text)).strip()


def _pick(record, name):
    for alias in _FIELD_ALIASES[name]:
        if alias in record and record[alias] is not None:
            return record[alias]
    return None


def clean_sample(raw, provenance=""):
    """
    Map a raw record (a mapping, or an already-clean :py:class:`RawSample`)
    onto canonical fields, strip URLs and collapse whitespace.

    Returns:
        :py:class:`RawSample`, or :py:class:`Rejection` with reason ``malformed``.
    """
    if isinstance(raw, RawSample):
        record = {"question": raw.question, "domain": raw.domain, "answer": raw.answer,
                  "tests": [t.to_record() for t in raw.tests], "starter_fn": raw.starter_fn,
                  "solver_outputs": list(raw.solver_outputs), "metadata": raw.metadata,
                  "id": raw.id}
        provenance = raw.provenance
    elif isinstance(raw, dict):
        record = raw
    else:
        return Rejection(MALFORMED, f"record is a {type(raw).__name__}")

    question = _pick(record, "question")
    if not isinstance(question, str) or not _normalize_text(question):
        return Rejection(MALFORMED, "missing question")

    tests = _pick(record, "tests") or []
    answer = _pick(record, "answer")
    domain = _pick(record, "domain") or ("code" if tests else "math")
    domain = str(domain).lower()
    if domain not in ("math", "code"):
        return Rejection(MALFORMED, f"unknown domain {domain!r}")
    try:
        tests = tuple(TestCase(str(t["input"]), str(t.get("expected_output", t.get("output"))))
                      for t in tests)
    except (TypeError, KeyError, AttributeError, InvalidInputError) as ex:
        return Rejection(MALFORMED, f"bad tests: {ex}")
    # a solution is verified against every gold test, so none may be dropped
    if len(tests) > MAX_TESTS:
        return Rejection(MALFORMED, f"more than {MAX_TESTS} tests ({len(tests)})")
    if domain == "math" and answer is None:
        return Rejection(MALFORMED, "math sample without an answer")
    if domain == "code" and not tests:
        return Rejection(MALFORMED, "code sample without tests")

    outputs = _pick(record, "solver_outputs") or []
    if isinstance(outputs, str) or not all(isinstance(o, str) for o in outputs):
        return Rejection(MALFORMED, "solver outputs must be a list of strings")

    return RawSample(
        question=_normalize_text(question),
        domain=domain,
        answer=None if answer is None else _normalize_text(str(answer)),
        tests=tests,
        starter_fn=_pick(record, "starter_fn"),
        solver_outputs=tuple(outputs),
        metadata=dict(record.get("metadata") or record.get("meta") or {}),
        provenance=provenance,
        id=None if record.get("id") is None else str(record["id"]),
    )


class CommandClassifier:
    """
    External keep/reject hook. The command receives the sample as one JSON
    object on stdin and prints ``{"keep": true}`` or
    ``{"keep": false, "reason": "<reason>"}``.
    """
    def __init__(self, argv, timeout=30.0):
        self.argv = list(argv)
        self.timeout = timeout

    def __call__(self, raw):
        payload = json.dumps({"question": raw.question, "domain": raw.domain})
        try:
            proc = subprocess.run(self.argv, input=payload, capture_output=True, text=True,
                                  timeout=self.timeout, check=True)
        except FileNotFoundError as ex:
            raise ExecutorEnvironmentError(f"classifier not found: {ex}") from ex
        except (subprocess.SubprocessError, OSError) as ex:
            logger.warning("classifier failed (%s); falling back to rules", ex)
            return None
        try:
            verdict = json.loads(proc.stdout)
        except ValueError:
            logger.warning("classifier printed no JSON verdict; falling back to rules")
            return None
        if verdict.get("keep", True):
            return Keep()
        return Rejection(verdict.get("reason", "classifier"), "external classifier")


def filter_unsuitable(raw, classifier=None):
    """
    Reject problems that cannot be verified reliably.

    Math: multiple questions, proofs, references to images or tables.
    Code: environment-specific problems, file I/O, network access.
    A ``classifier`` returning a :py:class:`Keep` or :py:class:`Rejection`
    overrides the rules; returning ``None`` defers to them.
    """
    if classifier is not None:
        decision = classifier(raw)
        if decision is not None:
            return decision
    rules = _MATH_RULES if raw.domain == "math" else _CODE_RULES
    for reason, pattern in rules:
        m = pattern.search(raw.question)
        if m:
            return Rejection(reason, m.group(0)[:40])
    return Keep()


def render_prompt(template, question, starter_fn=None):
    """
    Substitute the question into the template (``{question}`` or ``{q}``).
    A starter function name is appended to the question.
    """
    placeholder = next((p for p in PLACEHOLDERS if p in template), None)
    if placeholder is None:
        raise InvalidTemplateError("template has no {question} placeholder")
    if starter_fn:
        question = f"{question}\nThe solution must define the function `{starter_fn}`."
    return template.replace(placeholder, question)


def _candidate(output):
    extracted = format_reward(output)[1]
    return output.strip() if extracted is None else extracted


def pass_at_k(n, c, k):
    """
    Unbiased pass@k from ``c`` correct out of ``n`` samples.

    With fewer than ``k`` samples the unbiased estimate does not exist; the
    per-sample rate is extrapolated instead, ``1 - (1 - c/n)**k``.
    """
    if n == 0:
        return 0.0
    if n < k:
        return 1.0 - (1.0 - c / n) ** k
    if n - c < k:
        return 1.0
    return 1.0 - math.comb(n - c, k) / math.comb(n, k)


def _ambiguity(raw):
    if raw.domain == "math":
        meta = getattr(raw, "metadata", None) or getattr(raw, "meta", None) or {}
        accepted = [raw.answer] + list(meta.get("accepted_answers", []))
        for other in accepted[1:]:
            if math_equivalent(other, raw.answer).kind != EQUIVALENT:
                return f"conflicting accepted answers {raw.answer!r} / {other!r}"
        return None
    expected = {}
    for t in raw.tests:
        if expected.setdefault(t.input, t.expected_output) != t.expected_output:
            return f"conflicting expected outputs for input {t.input!r}"
    return None


def verify_sample(task, solver_outputs, exec_cfg=None, k=8):
    """
    Check externally produced solutions.

    Math: a solution is correct if it is equivalent to the gold answer. Code:
    a solution is correct if it passes every test. The sample is verified when
    at least one solution is correct, and filtered as ``ambiguous`` when the
    gold data contradicts itself.

    Returns:
        :py:class:`Verified` with pass@1 and pass@k over the solutions, or
        :py:class:`Rejection`.
    """
    reason = _ambiguity(task)
    if reason:
        return Rejection(AMBIGUOUS, reason)
    outputs = list(solver_outputs)
    if not outputs:
        return Rejection(UNVERIFIABLE, "no solutions")

    n_correct = 0
    for output in outputs:
        candidate = _candidate(output)
        if task.domain == "math":
            ok = math_equivalent(candidate, task.answer).kind == EQUIVALENT
        else:
            if exec_cfg is None:
                raise InvalidInputError("verifying code needs an executor config")
            ok = all(o.passed for o in run_code_tests(candidate, task.tests, exec_cfg))
        n_correct += ok
    if n_correct == 0:
        return Rejection(UNVERIFIABLE, f"0/{len(outputs)} solutions correct")
    return Verified(len(outputs), n_correct, n_correct / len(outputs),
                    pass_at_k(len(outputs), n_correct, k))


def difficulty_bucket(pass1, passk, thresholds=DifficultyThresholds()):
    """``easy`` if pass@1 >= t_easy, else ``hard`` if pass@k <= t_hard, else ``medium``."""
    if not 0.0 <= pass1 <= 1.0 or not 0.0 <= passk <= 1.0:
        raise InvalidInputError("pass rates must lie in [0, 1]")
    if pass1 > passk:
        raise InvalidInputError(f"pass@1 {pass1} exceeds pass@k {passk}")
    if pass1 >= thresholds.t_easy:
        return EASY
    if passk <= thresholds.t_hard:
        return HARD
    return MEDIUM


def curate_one(index, record, templates, thresholds, exec_cfg=None, classifier=None,
               provenance=""):
    """Run one record through the pipeline. Returns a :py:class:`Task` or :py:class:`Rejection`."""
    raw = clean_sample(record, provenance)
    if isinstance(raw, Rejection):
        return raw
    decision = filter_unsuitable(raw, classifier)
    if isinstance(decision, Rejection):
        return decision
    verdict = verify_sample(raw, raw.solver_outputs, exec_cfg, thresholds.k)
    if isinstance(verdict, Rejection):
        return verdict
    try:
        prompt = render_prompt(templates[raw.domain], raw.question, raw.starter_fn)
    except KeyError:
        raise InvalidTemplateError(f"no template for domain {raw.domain!r}")
    meta = dict(raw.metadata)
    meta.update(provenance=raw.provenance, thresholds=thresholds.to_record(),
                n_solutions=verdict.n_outputs)
    task_id = raw.id or f"{provenance or 'sample'}-{index:06d}"
    return Task(id=task_id, domain=raw.domain, prompt=prompt, answer=raw.answer,
                tests=raw.tests,
                difficulty=difficulty_bucket(verdict.pass1, verdict.passk, thresholds),
                pass1=verdict.pass1, passk=verdict.passk, meta=meta)


def curate(records, templates, thresholds=DifficultyThresholds(), exec_cfg=None,
           classifier=None, provenance="", workers=1):
    """
    Curate a sequence of raw records.

    Returns:
        ``(tasks, report)``; tasks keep the input order, and the report counts
        rejections per reason and kept tasks per difficulty.
    """
    records = list(records)

    def run(item):
        index, record = item
        return curate_one(index, record, templates, thresholds, exec_cfg, classifier, provenance)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, enumerate(records)))
    else:
        results = [run(item) for item in enumerate(records)]

    tasks = [r for r in results if isinstance(r, Task)]
    rejections = {}
    for r in results:
        if isinstance(r, Rejection):
            rejections[r.reason] = rejections.get(r.reason, 0) + 1
    difficulties = {level: sum(t.difficulty == level for t in tasks)
                    for level in (EASY, MEDIUM, HARD)}
    report = {
        "total": len(records),
        "kept": len(tasks),
        "rejected": len(records) - len(tasks),
        "rejections": dict(sorted(rejections.items())),
        "difficulty": difficulties,
        "thresholds": thresholds.to_record(),
    }
    logger.info("curated %d of %d samples; rejections %s", len(tasks), len(records),
                report["rejections"])
    return tasks, report


def load_jsonl(path):
    with open(path, 'r') as f:
        return [json.loads(line) for line in f if line.strip()]


def save_tasks(tasks, path):
    with open(path, 'w') as f:
        for task in tasks:
            f.write(json.dumps(task.to_record(), sort_keys=True) + "\n")


def load_tasks(path):
    return [Task.from_record(r) for r in load_jsonl(Path(path))]
