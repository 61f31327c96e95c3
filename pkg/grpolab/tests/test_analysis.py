import textwrap

import pytest

from grpolab import json
from grpolab.config import ValidationError
from grpolab.errors import InvalidInputError
from grpolab.trainer import COLUMNS, MetricRecord, MetricsLog
from grpolab.analysis import (TOKENS, WORDS, PatternLexicon, load_lexicon, classify_response,
                              count_occurrences, aha_stats, aha_by_step, load_corpus,
                              export_metrics)


def test_classify_examples():
    assert classify_response("Wait, let me double check.") == {"hesitation", "recheck"}
    assert classify_response("x = 4.") == frozenset()
    assert classify_response("butter") == frozenset()
    assert classify_response("BUT then") == {"hesitation"}
    assert classify_response("Let me double-check that.") == {"recheck"}
    assert classify_response("I was waiting.") == frozenset()


def test_count_occurrences():
    counts = count_occurrences("Wait. Wait, maybe. Another way: hold on.")
    assert counts == {"recheck": 0, "hesitation": 3, "explore": 2}


def test_custom_lexicon():
    lexicon = PatternLexicon({"doubt": ("hmm",)})
    assert classify_response("Hmm, odd.", lexicon) == {"doubt"}
    assert classify_response("Wait.", lexicon) == frozenset()
    with pytest.raises(InvalidInputError):
        PatternLexicon({})
    with pytest.raises(InvalidInputError):
        PatternLexicon({"doubt": ()})
    with pytest.raises(InvalidInputError):
        PatternLexicon({"doubt": ("Hmm",)})


def test_adding_patterns_never_removes_groups():
    texts = ["Wait, let me double check.", "x = 4.", "Hmm, another angle: recheck.",
             "Let me try again, hold on.", "butter", "Maybe not sure. Try again."]
    extra = ["hmm", "try again", "not sure", "another angle", "x"]
    base = PatternLexicon()
    for group in base.groups:
        for phrase in extra:
            grown = PatternLexicon({**base.groups, group: base.groups[group] + (phrase,)})
            for text in texts:
                assert classify_response(text, base) <= classify_response(text, grown)
                before, after = count_occurrences(text, base), count_occurrences(text, grown)
                assert all(after[name] >= before[name] for name in before)


def test_load_lexicon(tmp_path):
    path = tmp_path / "lexicon.json"
    path.write_text('{"doubt": ["hmm", "not sure"]}')
    assert load_lexicon(path).to_record() == {"doubt": ["hmm", "not sure"]}
    path.write_text('{"doubt": []}')
    with pytest.raises(ValidationError):
        load_lexicon(path)


def test_aha_stats_small():
    stats = aha_stats([("Wait, no.", 10), ("x = 4.", 4)])
    assert stats.aha_count == 1
    assert (stats.mean_len_aha, stats.mean_len_non_aha) == (10, 4)

    stats = aha_stats([("Wait.", 3), ("Hold on.", 5)])
    assert stats.mean_len_non_aha is None
    assert stats.to_record()["mean_len_non_aha"] is None

    assert aha_stats([("one two three", None)]).mean_len_non_aha == 3
    with pytest.raises(InvalidInputError):
        aha_stats([])


@pytest.fixture
def crafted_corpus():
    """100 responses: 20 hesitation, 10 recheck, 7 explore (which also hesitate), 63 plain."""
    corpus = [("Wait, that is wrong.", 12)] * 20
    corpus += [("Let me recheck the sum.", 20)] * 10
    corpus += [("Hold on, maybe another approach works.", 30)] * 7
    plain = ["The butter costs 4 dollars.", "x = 4.", "The waiting room holds 12 people.",
             "Butterflies have 6 legs.", "A rechecked total is 7."]
    corpus += [(plain[i % len(plain)], 5) for i in range(63)]
    return corpus


def test_crafted_corpus(crafted_corpus):
    stats = aha_stats(crafted_corpus)
    assert stats.total_responses == 100
    assert stats.aha_count == 37
    assert stats.group_counts == {"hesitation": 27, "recheck": 10, "explore": 7}
    assert stats.group_occurrences == {"hesitation": 27, "recheck": 10, "explore": 14}
    assert stats.mean_len_aha == pytest.approx((20 * 12 + 10 * 20 + 7 * 30) / 37)
    assert stats.mean_len_non_aha == 5

    naive = sum(1 for text, _ in crafted_corpus if classify_response(text))
    assert naive == stats.aha_count
    assert aha_stats(list(reversed(crafted_corpus))) == stats


def test_aha_by_step():
    records = [{"text": "Wait.", "step": 0, "length": 1},
               {"text": "Done.", "step": 3, "length": 1},
               {"text": "Maybe.", "step": 12, "length": 1}]
    stats = aha_by_step(records, bucket_size=10)
    assert [s.step for s in stats] == [0, 10]
    assert [s.aha_count for s in stats] == [1, 1]
    assert [s.total_responses for s in stats] == [2, 1]
    with pytest.raises(InvalidInputError):
        aha_by_step(records, bucket_size=0)


def test_load_corpus(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"text": "Wait, yes.", "length": 7, "step": 0}\n'
                    '{"text": "fine", "length": 2, "step": 1}\n')
    records, unit = load_corpus(path)
    assert unit == TOKENS
    assert records[0]["length"] == 7

    path.write_text('{"text": "Wait, yes.", "length": 7}\n{"text": "fine"}\n')
    records, unit = load_corpus(path)
    assert unit == WORDS
    assert all(r["length"] is None for r in records)

    path.write_text('{"length": 7}\n')
    with pytest.raises(InvalidInputError):
        load_corpus(path)


def _log(n):
    log = MetricsLog()
    for step in range(n):
        log.append(MetricRecord(step=step, stage=1, mean_reward=0.25 * step, mean_len=3.0,
                                zero_adv_frac=0.5, clip_frac=0.0))
    return log


def test_export_empty_log(tmp_path):
    paths = export_metrics(MetricsLog(), [], tmp_path)
    assert paths == sorted(paths)
    assert (tmp_path / "mean_reward.csv").read_text() == "step,mean_reward\n"
    assert (tmp_path / "aha.csv").read_text() == \
        "step,total_responses,aha_count,mean_len_aha,mean_len_non_aha,length_unit\n"
    assert len(paths) == len(COLUMNS) - 1 + 2


def test_export_three_steps(tmp_path, crafted_corpus):
    stats = [aha_stats(crafted_corpus, step=0)]
    export_metrics(_log(3), stats, tmp_path)
    assert (tmp_path / "mean_reward.csv").read_text() == textwrap.dedent("""\
        step,mean_reward
        0,0.0
        1,0.25
        2,0.5
        """)
    # NaN series export as empty cells
    assert (tmp_path / "pool_accuracy.csv").read_text().splitlines()[1] == "0,"
    aha_rows = (tmp_path / "aha.csv").read_text().splitlines()
    assert aha_rows[0].endswith("explore_occurrences,hesitation_occurrences,recheck_occurrences")
    assert aha_rows[1].startswith("0,100,37,")
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["steps"] == 3
    assert summary["aha"][0]["aha_count"] == 37


def test_export_byte_stable(tmp_path, crafted_corpus):
    stats = [aha_stats(crafted_corpus, step=0)]
    first = {p.name: p.read_bytes() for p in export_metrics(_log(3), stats, tmp_path / "a")}
    second = {p.name: p.read_bytes() for p in export_metrics(_log(3), stats, tmp_path / "b")}
    assert first == second


def test_export_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        export_metrics(_log(1), [], blocker / "out")


if __name__ == "__main__":
    pytest.main(['-s', '--tb=native', '--pyargs', 'grpolab.tests.test_analysis'])
