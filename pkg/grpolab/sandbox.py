"""
Run a program against stdin/stdout test cases.

Each test case runs in its own temporary working directory (removed when the
test finishes) as a child process in its own session, so a timeout kills the
whole process group. Standard output goes to a file and only
``output_limit + 1`` bytes of it are ever read back.

For hermetic tests, :py:func:`run_stack_program` interprets a tiny stack
language in-process; select it with ``ExecutorConfig(builtin=True)``.
"""
import os
import time
import signal
import logging
import tempfile
import subprocess
from pathlib import Path
from dataclasses import dataclass
from typing import Optional, Tuple
from concurrent.futures import ThreadPoolExecutor

from .errors import ExecutorEnvironmentError, InvalidInputError

logger = logging.getLogger(__name__)

MAX_TESTS = 10

PASS = "pass"
WRONG_ANSWER = "wrong_answer"
RUNTIME_ERROR = "runtime_error"
TIMEOUT = "timeout"
OUTPUT_LIMIT = "output_limit"


@dataclass(frozen=True)
class ExecutorConfig:
    command_template: Tuple[str, ...] = ("python3", "{program}")
    builtin: bool = False
    wall_clock_limit: float = 2.0
    output_limit: int = 65536
    memory_note: str = "256MB"
    network: bool = False
    max_concurrency: int = 4

    def __post_init__(self):
        object.__setattr__(self, "command_template", tuple(self.command_template))
        if self.network:
            raise InvalidInputError("network access cannot be enabled for sandboxed programs")
        if self.wall_clock_limit <= 0 or self.output_limit <= 0 or self.max_concurrency < 1:
            raise InvalidInputError("executor limits must be positive")
        if not self.builtin and not any("{program}" in arg for arg in self.command_template):
            raise InvalidInputError("command_template needs a '{program}' placeholder")


@dataclass(frozen=True)
class TestCase:
    """
    One stdin/stdout case. ``time_limit`` (seconds) and ``output_limit``
    (bytes) fall back to the executor's limits when ``None``.
    """
    __test__ = False  # not a pytest class

    input: str
    expected_output: str
    time_limit: Optional[float] = None
    output_limit: Optional[int] = None

    def __post_init__(self):
        if self.time_limit is not None and self.time_limit <= 0:
            raise InvalidInputError("time_limit must be positive")
        if self.output_limit is not None and self.output_limit <= 0:
            raise InvalidInputError("output_limit must be positive")

    def to_record(self):
        return {"input": self.input, "expected_output": self.expected_output}


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False

    status: str
    elapsed: float = 0.0
    detail: str = ""

    @property
    def passed(self):
        return self.status == PASS

    def to_record(self):
        return {"status": self.status, "elapsed": round(self.elapsed, 6), "detail": self.detail}


def normalize_output(text):
    """Drop trailing whitespace on each line and trailing blank lines."""
    lines = [line.rstrip() for line in text.splitlines()]
    while lines and not lines[-1]:
        lines.pop()
    return lines


def run_code_tests(program, tests, exec_cfg):
    """
    Run ``program`` on every test case.

    Returns:
        A list of :py:class:`TestOutcome`, in the order of ``tests``.

    Raises:
        ExecutorEnvironmentError: the runner named by the command template
        cannot be started.
    """
    tests = list(tests)
    if not tests:
        raise InvalidInputError("no test cases")
    if len(tests) > MAX_TESTS:
        raise InvalidInputError(f"{len(tests)} test cases exceed the maximum of {MAX_TESTS}")

    run_one = _run_builtin if exec_cfg.builtin else _run_external
    if exec_cfg.max_concurrency == 1 or len(tests) == 1:
        outcomes = [run_one(program, t, exec_cfg) for t in tests]
    else:
        with ThreadPoolExecutor(max_workers=min(exec_cfg.max_concurrency, len(tests))) as pool:
            outcomes = list(pool.map(lambda t: run_one(program, t, exec_cfg), tests))
    logger.debug("%d/%d test cases passed", sum(o.passed for o in outcomes), len(outcomes))
    return outcomes


def _judge(stdout, returncode, test):
    if returncode != 0:
        return RUNTIME_ERROR, f"exit code {returncode}"
    if normalize_output(stdout) == normalize_output(test.expected_output):
        return PASS, ""
    return WRONG_ANSWER, ""


def _run_external(program, test, exec_cfg):
    time_limit = test.time_limit or exec_cfg.wall_clock_limit
    output_limit = test.output_limit or exec_cfg.output_limit

    with tempfile.TemporaryDirectory(prefix="grpolab_sandbox_") as work_dir:
        work_dir = Path(work_dir)
        program_path = work_dir / "program"
        program_path.write_text(program)
        argv = [arg.replace("{program}", str(program_path)) for arg in exec_cfg.command_template]
        env = {"PATH": os.environ.get("PATH", ""), "HOME": str(work_dir), "LANG": "C.UTF-8"}
        logger.debug("sandbox: %s", " ".join(argv))

        with open(work_dir / "stdout", "wb") as fout:
            start = time.monotonic()
            try:
                proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=fout,
                                        stderr=subprocess.DEVNULL, cwd=work_dir, env=env,
                                        start_new_session=True)
            except (FileNotFoundError, PermissionError) as ex:
                raise ExecutorEnvironmentError(f"cannot start {argv[0]!r}: {ex}") from ex
            try:
                proc.communicate(test.input.encode("utf-8"), timeout=time_limit)
            except subprocess.TimeoutExpired:
                _kill_group(proc)
                logger.warning("sandbox timeout after %.2fs", time_limit)
                return TestOutcome(TIMEOUT, time.monotonic() - start)
            elapsed = time.monotonic() - start

        with open(work_dir / "stdout", "rb") as f:
            raw = f.read(output_limit + 1)
        if len(raw) > output_limit:
            return TestOutcome(OUTPUT_LIMIT, elapsed, f"more than {output_limit} bytes")
        status, detail = _judge(raw.decode("utf-8", errors="replace"), proc.returncode, test)
        return TestOutcome(status, elapsed, detail)


def _kill_group(proc):
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except ProcessLookupError:
        pass
    proc.wait()


def _run_builtin(program, test, exec_cfg):
    time_limit = test.time_limit or exec_cfg.wall_clock_limit
    output_limit = test.output_limit or exec_cfg.output_limit
    start = time.monotonic()
    try:
        stdout = run_stack_program(program, test.input, time_limit, output_limit)
    except StackTimeout:
        return TestOutcome(TIMEOUT, time.monotonic() - start)
    except StackOutputLimit:
        return TestOutcome(OUTPUT_LIMIT, time.monotonic() - start,
                           f"more than {output_limit} bytes")
    except StackError as ex:
        return TestOutcome(RUNTIME_ERROR, time.monotonic() - start, str(ex))
    status, detail = _judge(stdout, 0, test)
    return TestOutcome(status, time.monotonic() - start, detail)


class StackError(Exception):
    pass


class StackTimeout(StackError):
    pass


class StackOutputLimit(StackError):
    pass


_BINARY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": lambda a, b: a // b,
    "%": lambda a, b: a % b,
    "eq": lambda a, b: int(a == b),
    "lt": lambda a, b: int(a < b),
}


def run_stack_program(program, stdin, time_limit=2.0, output_limit=65536):
    """
    Interpret a stack-language program and return its standard output.

    Words (whitespace separated; ``#`` starts a comment to end of line):

    - an integer literal pushes itself
    - ``in`` pushes the next integer of stdin; ``more`` pushes 1 if stdin has another integer
    - ``echo`` copies the whole of stdin to stdout
    - ``out`` pops and prints a value on its own line
    - ``dup`` ``drop`` ``swap`` ``over`` rearrange the stack
    - ``+ - * / % eq lt`` pop two values and push the result
    - ``name:`` defines a label; ``jmp name`` jumps; ``jz name`` pops and jumps if zero
    - ``halt`` stops
    """
    words = []
    for line in program.splitlines():
        words.extend(line.split("#", 1)[0].split())
    labels = {w[:-1]: i for i, w in enumerate(words) if w.endswith(":") and len(w) > 1}
    inputs = stdin.split()
    next_input = 0
    stack = []
    out = []
    out_size = 0
    deadline = time.monotonic() + time_limit

    def pop():
        if not stack:
            raise StackError("stack underflow")
        return stack.pop()

    def emit(text):
        nonlocal out_size
        out.append(text)
        out_size += len(text.encode("utf-8"))
        if out_size > output_limit:
            raise StackOutputLimit()

    pc = 0
    executed = 0
    while pc < len(words):
        executed += 1
        if executed % 1024 == 0 and time.monotonic() > deadline:
            raise StackTimeout()
        word = words[pc]
        pc += 1
        if word.endswith(":") and len(word) > 1:
            continue
        if word in ("jmp", "jz"):
            if pc >= len(words) or words[pc] not in labels:
                raise StackError(f"{word} needs a defined label")
            target = labels[words[pc]]
            pc += 1
            if word == "jmp" or pop() == 0:
                pc = target
        elif word in _BINARY:
            b, a = pop(), pop()
            try:
                stack.append(_BINARY[word](a, b))
            except ZeroDivisionError:
                raise StackError("division by zero")
        elif word == "in":
            if next_input >= len(inputs):
                raise StackError("read past end of input")
            try:
                stack.append(int(inputs[next_input]))
            except ValueError:
                raise StackError(f"not an integer: {inputs[next_input]!r}")
            next_input += 1
        elif word == "more":
            stack.append(int(next_input < len(inputs)))
        elif word == "echo":
            emit(stdin)
        elif word == "out":
            emit(f"{pop()}\n")
        elif word == "dup":
            v = pop()
            stack.extend([v, v])
        elif word == "drop":
            pop()
        elif word == "swap":
            b, a = pop(), pop()
            stack.extend([b, a])
        elif word == "over":
            b, a = pop(), pop()
            stack.extend([a, b, a])
        elif word == "halt":
            break
        else:
            try:
                stack.append(int(word))
            except ValueError:
                raise StackError(f"unknown word {word!r}")
    return "".join(out)
