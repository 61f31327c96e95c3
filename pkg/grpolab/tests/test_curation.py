import sys

import pytest

from grpolab.errors import InvalidInputError, InvalidTemplateError, ExecutorEnvironmentError
from grpolab.sandbox import ExecutorConfig, TestCase
from grpolab.curation import (MALFORMED, MULTI_QUESTION, PROOF_BASED, NEEDS_IMAGE_OR_TABLE,
                              ENV_DEPENDENT, FILE_IO, NETWORK, UNVERIFIABLE, AMBIGUOUS,
                              EASY, MEDIUM, HARD, DifficultyThresholds, Rejection, Keep,
                              Verified, RawSample, Task, clean_sample, CommandClassifier,
                              filter_unsuitable, render_prompt, pass_at_k, verify_sample,
                              difficulty_bucket, curate, save_tasks, load_tasks)

TEMPLATES = {"math": "Solve: {question}\nPut the answer in <output></output>.",
             "code": "Q: {q}\nA:"}
BUILTIN = ExecutorConfig(builtin=True, max_concurrency=1)


def math_sample(question, answer="4", outputs=("4",), **kwargs):
    return RawSample(question=question, domain="math", answer=answer,
                     solver_outputs=tuple(outputs), **kwargs)


def code_sample(question, tests=(("1 2", "3"),), outputs=("in in + out",)):
    return RawSample(question=question, domain="code",
                     tests=tuple(TestCase(i, o) for i, o in tests),
                     solver_outputs=tuple(outputs))


def test_clean_sample_urls():
    cleaned = clean_sample({"question": "see https://x.y/z  for\n details", "answer": "1"})
    assert cleaned.question == "see for details"
    assert cleaned.domain == "math"
    cleaned = clean_sample({"problem": "visit www.example.com now", "final_answer": 2})
    assert cleaned.question == "visit now"
    assert cleaned.answer == "2"


def test_clean_sample_idempotent():
    cleaned = clean_sample({"question": "What is 2+2?", "answer": "4", "id": "q1"},
                           provenance="set-a")
    assert clean_sample(cleaned) == cleaned
    assert cleaned.provenance == "set-a"


def test_clean_sample_malformed():
    assert clean_sample({"answer": "4"}) == Rejection(MALFORMED, "missing question")
    assert clean_sample({"question": "   ", "answer": "4"}).reason == MALFORMED
    assert clean_sample({"question": "q", "domain": "poetry"}).reason == MALFORMED
    assert clean_sample({"question": "q"}).reason == MALFORMED
    assert clean_sample({"question": "q", "domain": "code"}).reason == MALFORMED
    assert clean_sample({"question": "q", "tests": [{"in": 1}]}).reason == MALFORMED
    assert clean_sample({"question": "q", "answer": "1", "responses": "1"}).reason == MALFORMED
    assert clean_sample(["not", "a", "record"]).reason == MALFORMED


def test_clean_sample_code_fields():
    tests = [{"input": f"{i}", "output": f"{i}"} for i in range(10)]
    cleaned = clean_sample({"description": "Echo.", "test_cases": tests, "fn_name": "solve"})
    assert cleaned.domain == "code"
    assert len(cleaned.tests) == 10
    assert cleaned.starter_fn == "solve"

    tests.append({"input": "10", "output": "10"})
    rejected = clean_sample({"description": "Echo.", "test_cases": tests})
    assert rejected.reason == MALFORMED
    assert "more than 10 tests" in rejected.detail


def test_failing_eleventh_test_is_not_curated():
    # the solution passes the first ten tests and would be kept if the last one were dropped
    tests = [{"input": f"{i}", "output": f"{i}"} for i in range(10)]
    tests.append({"input": "10", "output": "999"})
    record = {"id": "echo", "question": "Echo the number.", "tests": tests,
              "solver_outputs": ["in out"]}
    tasks, report = curate([record], TEMPLATES, DifficultyThresholds(k=1), exec_cfg=BUILTIN)
    assert tasks == []
    assert report["rejections"] == {MALFORMED: 1}


@pytest.mark.parametrize("question, reason", [
    ("Prove that for all n the sum is even.", PROOF_BASED),
    ("Show that x is rational.", PROOF_BASED),
    ("What is x? And what is y?", MULTI_QUESTION),
    ("Find (a) the area and (b) the perimeter.", MULTI_QUESTION),
    ("Using the figure, find the angle.", NEEDS_IMAGE_OR_TABLE),
    ("From the table below, compute the mean.", NEEDS_IMAGE_OR_TABLE),
    ("Compute ![img](a.png) the area.", NEEDS_IMAGE_OR_TABLE),
])
def test_filter_math_rejections(question, reason):
    assert filter_unsuitable(math_sample(question)).reason == reason


@pytest.mark.parametrize("question, reason", [
    ("Read the file data.txt and print its lines.", FILE_IO),
    ("Use CUDA to multiply matrices.", ENV_DEPENDENT),
    ("Fetch the page over HTTP and count words.", NETWORK),
    ("Open a socket and listen.", NETWORK),
])
def test_filter_code_rejections(question, reason):
    assert filter_unsuitable(code_sample(question)).reason == reason


@pytest.mark.parametrize("question", [
    "A farmer has 12 cows and sells 5. How many are left?",
    "Compute f(a)+f(b) for f(x) = x^2, a = 1, b = 2.",
])
def test_filter_keeps_ordinary_problems(question):
    assert filter_unsuitable(math_sample(question)) == Keep()


def test_filter_keeps_ordinary_code():
    assert filter_unsuitable(code_sample("Read two integers and print their sum.")) == Keep()


def test_command_classifier():
    reject = CommandClassifier([sys.executable, "-c",
                                "print('{\"keep\": false, \"reason\": \"off_topic\"}')"])
    assert filter_unsuitable(math_sample("Prove it."), reject) == \
        Rejection("off_topic", "external classifier")

    keep = CommandClassifier([sys.executable, "-c", "print('{\"keep\": true}')"])
    assert filter_unsuitable(math_sample("Prove it."), keep) == Keep()

    garbage = CommandClassifier([sys.executable, "-c", "print('not json')"])
    assert filter_unsuitable(math_sample("Prove it."), garbage).reason == PROOF_BASED

    missing = CommandClassifier(["/nonexistent/grpolab-classifier"])
    with pytest.raises(ExecutorEnvironmentError):
        filter_unsuitable(math_sample("What is 2+2?"), missing)


def test_render_prompt():
    assert render_prompt("Q: {q}\nA:", "2+2?") == "Q: 2+2?\nA:"
    assert "solve" in render_prompt(TEMPLATES["code"], "Add numbers.", starter_fn="solve")
    with pytest.raises(InvalidTemplateError):
        render_prompt("no placeholder here", "2+2?")


def test_pass_at_k():
    assert pass_at_k(8, 0, 4) == 0.0
    assert pass_at_k(8, 8, 4) == 1.0
    assert pass_at_k(8, 1, 1) == pytest.approx(1 / 8)
    assert pass_at_k(8, 1, 2) == pytest.approx(0.25)
    assert pass_at_k(0, 0, 4) == 0.0


def test_pass_at_k_with_few_samples():
    assert pass_at_k(2, 1, 8) == pytest.approx(1 - 0.5 ** 8)
    assert pass_at_k(4, 0, 8) == 0.0
    assert pass_at_k(3, 3, 8) == 1.0
    for n in range(1, 8):
        for c in range(n + 1):
            assert c / n <= pass_at_k(n, c, 8) <= 1.0


def test_few_solutions_can_be_hard():
    thresholds = DifficultyThresholds(t_easy=0.7, t_hard=0.95, k=8)
    record = {"id": "q", "question": "What is 3*3?", "answer": "9",
              "solver_outputs": ["9", "8", "8", "8"]}
    tasks, _ = curate([record], TEMPLATES, thresholds)
    assert tasks[0].passk == pytest.approx(1 - 0.75 ** 8)
    assert tasks[0].difficulty == HARD


def test_verify_math():
    assert verify_sample(math_sample("q", "1/2"), ["0.5"]) == Verified(1, 1, 1.0, 1.0)
    assert verify_sample(math_sample("q", "1/2"), ["The half. <output>\\frac{1}{2}</output>",
                                                   "0.3"]).n_correct == 1
    assert verify_sample(math_sample("q", "1/2"), ["0.3", "7"]).reason == UNVERIFIABLE
    assert verify_sample(math_sample("q", "1/2"), []).reason == UNVERIFIABLE


def test_verify_ambiguous():
    sample = math_sample("q", "1/2", metadata={"accepted_answers": ["0.5", "0.25"]})
    assert verify_sample(sample, ["0.5"]).reason == AMBIGUOUS
    sample = math_sample("q", "1/2", metadata={"accepted_answers": ["0.5"]})
    assert isinstance(verify_sample(sample, ["0.5"]), Verified)
    sample = code_sample("Add.", tests=(("1 2", "3"), ("1 2", "4")))
    assert verify_sample(sample, ["in in + out"], BUILTIN).reason == AMBIGUOUS


def test_verify_code():
    sample = code_sample("Add.", tests=(("1 2", "3"), ("2 2", "4")))
    verdict = verify_sample(sample, ["in in + out", "in in * out"], BUILTIN)
    assert (verdict.n_outputs, verdict.n_correct) == (2, 1)
    with pytest.raises(InvalidInputError):
        verify_sample(sample, ["in in + out"])


def test_difficulty_bucket():
    assert difficulty_bucket(0.9, 1.0) == EASY
    assert difficulty_bucket(0.0, 0.1) == HARD
    assert difficulty_bucket(0.4, 0.8) == MEDIUM
    with pytest.raises(InvalidInputError):
        difficulty_bucket(0.8, 0.5)
    with pytest.raises(InvalidInputError):
        difficulty_bucket(1.2, 1.5)


def test_difficulty_bucket_monotone_in_pass1():
    order = {HARD: 0, MEDIUM: 1, EASY: 2}
    grid = [i / 20 for i in range(21)]
    for thresholds in (DifficultyThresholds(), DifficultyThresholds(t_easy=0.5, t_hard=0.6)):
        for passk in grid:
            levels = [order[difficulty_bucket(p, passk, thresholds)] for p in grid if p <= passk]
            assert levels == sorted(levels)


def _records():
    return [
        {"id": "easy", "question": "What is 2+2?", "answer": "4", "solver_outputs": ["4"] * 8},
        {"id": "medium", "question": "What is 1/2 as a decimal?", "answer": "0.5",
         "solver_outputs": ["0.5"] * 4 + ["5"] * 4},
        {"id": "hard", "question": "What is 3*3?", "answer": "9",
         "solver_outputs": ["9"] + ["8"] * 7},
        {"question": "Prove that 1 < 2.", "answer": "-", "solver_outputs": ["-"]},
        {"question": "Sum?", "answer": "3", "solver_outputs": ["2"]},
        {"answer": "3"},
        {"id": "code", "question": "Add two numbers.", "tests": [{"input": "1 2", "output": "3"}],
         "solver_outputs": ["<output>in in + out</output>"]},
        {"question": "Read the file nums.txt and add.", "tests": [{"input": "", "output": "0"}],
         "solver_outputs": ["0 out"]},
    ]


def test_curate_pipeline():
    thresholds = DifficultyThresholds(k=2)
    tasks, report = curate(_records(), TEMPLATES, thresholds, exec_cfg=BUILTIN,
                           provenance="unit")
    assert [t.id for t in tasks] == ["easy", "medium", "hard", "code"]
    assert [t.difficulty for t in tasks] == [EASY, MEDIUM, HARD, EASY]
    assert tasks[0].prompt.startswith("Solve: What is 2+2?")
    assert tasks[3].prompt == "Q: Add two numbers.\nA:"
    assert tasks[0].meta["provenance"] == "unit"
    assert report == {
        "total": 8, "kept": 4, "rejected": 4,
        "rejections": {FILE_IO: 1, MALFORMED: 1, PROOF_BASED: 1, UNVERIFIABLE: 1},
        "difficulty": {EASY: 2, MEDIUM: 1, HARD: 1},
        "thresholds": {"t_easy": 0.7, "t_hard": 0.3, "k": 2},
    }

    parallel, parallel_report = curate(_records(), TEMPLATES, thresholds, exec_cfg=BUILTIN,
                                       provenance="unit", workers=3)
    assert parallel == tasks
    assert parallel_report == report


def test_curate_missing_template():
    with pytest.raises(InvalidTemplateError):
        curate(_records()[:1], {"code": "{q}"})


def test_task_file_round_trip(tmp_path):
    tasks, _ = curate(_records(), TEMPLATES, exec_cfg=BUILTIN)
    path = tmp_path / "tasks.jsonl"
    save_tasks(tasks, path)
    assert load_tasks(path) == tasks
    first = path.read_bytes()
    save_tasks(load_tasks(path), path)
    assert path.read_bytes() == first


def test_task_validation():
    with pytest.raises(InvalidInputError):
        Task("t", "math", "p")
    with pytest.raises(InvalidInputError):
        Task("t", "code", "p")
    with pytest.raises(InvalidInputError):
        Task("t", "math", "p", answer="1", difficulty="trivial")


if __name__ == "__main__":
    pytest.main(['-s', '--tb=native', '--pyargs', 'grpolab.tests.test_curation'])
