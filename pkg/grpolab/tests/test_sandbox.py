import sys

import pytest

from grpolab.errors import ExecutorEnvironmentError, InvalidInputError
from grpolab.sandbox import (PASS, WRONG_ANSWER, RUNTIME_ERROR, TIMEOUT, OUTPUT_LIMIT,
                             ExecutorConfig, TestCase, normalize_output, run_code_tests,
                             run_stack_program, StackError)

BUILTIN = ExecutorConfig(builtin=True, max_concurrency=1)

# doubles its input; spins forever on zero
DOUBLER = """
in dup jz spin
2 * out halt
spin: jmp spin
"""


@pytest.fixture
def doubler_tests():
    tests = [TestCase(str(n), str(2 * n)) for n in range(1, 9)]
    tests[3] = TestCase("4", "9")
    tests.append(TestCase("x", "0"))
    tests.append(TestCase("0", "0", time_limit=0.2))
    return tests


def test_builtin_fixture(doubler_tests):
    outcomes = run_code_tests(DOUBLER, doubler_tests, BUILTIN)
    assert [o.status for o in outcomes] == [PASS, PASS, PASS, WRONG_ANSWER, PASS, PASS, PASS,
                                            PASS, RUNTIME_ERROR, TIMEOUT]


def test_builtin_concurrent_order(doubler_tests):
    serial = [o.status for o in run_code_tests(DOUBLER, doubler_tests, BUILTIN)]
    parallel = run_code_tests(DOUBLER, doubler_tests,
                              ExecutorConfig(builtin=True, max_concurrency=4))
    assert [o.status for o in parallel] == serial


def test_stack_program():
    assert run_stack_program("in in + out", "2 3") == "5\n"
    assert run_stack_program("echo", "hello\nworld\n") == "hello\nworld\n"
    summer = "0 top: more jz done in + jmp top done: out"
    assert run_stack_program(summer, "1 2 3 4") == "10\n"
    with pytest.raises(StackError):
        run_stack_program("drop", "")
    with pytest.raises(StackError):
        run_stack_program("1 0 /", "")
    with pytest.raises(StackError):
        run_stack_program("jmp nowhere", "")


def test_builtin_output_limit():
    outcome, = run_code_tests("top: 1 out jmp top", [TestCase("", "", output_limit=100)],
                              BUILTIN)
    assert outcome.status == OUTPUT_LIMIT


def test_normalize_output():
    assert normalize_output("a  \nb\n\n\n") == ["a", "b"]
    assert normalize_output("") == []


def test_case_validation():
    with pytest.raises(InvalidInputError):
        run_code_tests("echo", [], BUILTIN)
    with pytest.raises(InvalidInputError):
        run_code_tests("echo", [TestCase("", "")] * 11, BUILTIN)
    with pytest.raises(InvalidInputError):
        TestCase("", "", time_limit=0)
    with pytest.raises(InvalidInputError):
        ExecutorConfig(network=True)
    with pytest.raises(InvalidInputError):
        ExecutorConfig(command_template=("python3",))


PYTHON = ExecutorConfig(command_template=(sys.executable, "{program}"), max_concurrency=2)


def test_external_nine_of_ten():
    program = "print(int(input()) * 2)\n"
    tests = [TestCase(str(n), str(2 * n)) for n in range(10)]
    tests[6] = TestCase("6", "13")
    outcomes = run_code_tests(program, tests, PYTHON)
    assert [o.passed for o in outcomes] == [True] * 6 + [False] + [True] * 3
    assert outcomes[6].status == WRONG_ANSWER


def test_external_echo_and_errors():
    echo = "import sys\nsys.stdout.write(sys.stdin.read())\n"
    outcome, = run_code_tests(echo, [TestCase("a b\n", "a b")], PYTHON)
    assert outcome.status == PASS

    outcome, = run_code_tests("raise SystemExit(3)\n", [TestCase("", "")], PYTHON)
    assert outcome.status == RUNTIME_ERROR

    outcome, = run_code_tests("while True:\n    pass\n", [TestCase("", "", time_limit=0.5)],
                              PYTHON)
    assert outcome.status == TIMEOUT

    outcome, = run_code_tests("print('x' * 5000)\n", [TestCase("", "", output_limit=1000)],
                              PYTHON)
    assert outcome.status == OUTPUT_LIMIT


def test_external_missing_runner():
    cfg = ExecutorConfig(command_template=("/nonexistent/grpolab-runner", "{program}"))
    with pytest.raises(ExecutorEnvironmentError):
        run_code_tests("print(1)", [TestCase("", "1")], cfg)


if __name__ == "__main__":
    pytest.main(['-s', '--tb=native', '--pyargs', 'grpolab.tests.test_sandbox'])
