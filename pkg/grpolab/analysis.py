"""
Reflection-pattern counting over response corpora, and metric export.

A response is an "aha response" when it contains at least one phrase of the
pattern lexicon. Phrases match case-insensitively on word boundaries, so
``but`` does not match ``butter``; multiword phrases match as contiguous word
sequences.
"""
import re
import csv
import math
import logging
from pathlib import Path
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from . import json
from .config import validate
from .errors import InvalidInputError
from .schemas import LEXICON_SCHEMA
from .trainer import COLUMNS

logger = logging.getLogger(__name__)

TOKENS = "tokens"
WORDS = "words"

DEFAULT_GROUPS = {
    "recheck": ("recheck", "reevaluate", "reexamine", "rethink", "double check"),
    "hesitation": ("wait", "but", "maybe", "aha"),
    "explore": ("another way", "another approach", "another method", "but how", "hold on"),
}


def _phrase_regex(phrase):
    words = phrase.split()
    return re.compile(r'\b' + r'[\s\-]+'.join(re.escape(w) for w in words) + r'\b', re.IGNORECASE)


@dataclass(frozen=True)
class PatternLexicon:
    groups: Dict[str, Tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_GROUPS))

    def __post_init__(self):
        groups = {name: tuple(phrases) for name, phrases in self.groups.items()}
        if not groups:
            raise InvalidInputError("a lexicon needs at least one group")
        for name, phrases in groups.items():
            if not phrases:
                raise InvalidInputError(f"lexicon group {name!r} is empty")
            if any(p != p.lower() or not p.strip() for p in phrases):
                raise InvalidInputError(f"lexicon group {name!r}: patterns must be lowercase")
        object.__setattr__(self, "groups", groups)
        compiled = {name: tuple(_phrase_regex(p) for p in phrases)
                    for name, phrases in groups.items()}
        object.__setattr__(self, "_compiled", compiled)

    @property
    def compiled(self):
        return self._compiled

    def to_record(self):
        return {name: list(phrases) for name, phrases in sorted(self.groups.items())}


def load_lexicon(path):
    with open(path, 'r') as f:
        data = json.load(f)
    validate(data, LEXICON_SCHEMA)
    return PatternLexicon(data)


def classify_response(text, lexicon=None):
    """The names of the lexicon groups with at least one match in ``text``."""
    lexicon = lexicon or PatternLexicon()
    return frozenset(name for name, patterns in lexicon.compiled.items()
                     if any(p.search(text) for p in patterns))


def count_occurrences(text, lexicon=None):
    """Number of pattern matches per group (every occurrence counts)."""
    lexicon = lexicon or PatternLexicon()
    return {name: sum(len(p.findall(text)) for p in patterns)
            for name, patterns in lexicon.compiled.items()}


@dataclass(frozen=True)
class AhaStats:
    """
    ``group_counts`` counts responses hitting each group; ``group_occurrences``
    counts every pattern match. Mean lengths are ``None`` for an empty class.
    """
    total_responses: int
    aha_count: int
    group_counts: Dict[str, int]
    group_occurrences: Dict[str, int]
    mean_len_aha: Optional[float]
    mean_len_non_aha: Optional[float]
    length_unit: str = TOKENS
    step: Optional[int] = None

    def to_record(self):
        return {
            "step": self.step,
            "total_responses": self.total_responses,
            "aha_count": self.aha_count,
            "group_counts": dict(sorted(self.group_counts.items())),
            "group_occurrences": dict(sorted(self.group_occurrences.items())),
            "mean_len_aha": self.mean_len_aha,
            "mean_len_non_aha": self.mean_len_non_aha,
            "length_unit": self.length_unit,
        }


def _mean_or_none(values):
    return math.fsum(values) / len(values) if values else None


def aha_stats(corpus, lexicon=None, length_unit=TOKENS, step=None):
    """
    Aggregate counts over ``corpus``, a sequence of ``(text, length)`` pairs.
    A length of ``None`` is replaced by the whitespace word count.

    Raises:
        InvalidInputError: the corpus is empty.
    """
    lexicon = lexicon or PatternLexicon()
    corpus = list(corpus)
    if not corpus:
        raise InvalidInputError("empty corpus")

    group_counts = {name: 0 for name in lexicon.groups}
    occurrences = {name: 0 for name in lexicon.groups}
    aha_lengths = []
    other_lengths = []
    for text, length in corpus:
        if length is None:
            length = len(text.split())
        hits = classify_response(text, lexicon)
        for name in hits:
            group_counts[name] += 1
        for name, n in count_occurrences(text, lexicon).items():
            occurrences[name] += n
        (aha_lengths if hits else other_lengths).append(length)

    return AhaStats(
        total_responses=len(corpus),
        aha_count=len(aha_lengths),
        group_counts=group_counts,
        group_occurrences=occurrences,
        mean_len_aha=_mean_or_none(aha_lengths),
        mean_len_non_aha=_mean_or_none(other_lengths),
        length_unit=length_unit,
        step=step,
    )


def aha_by_step(records, lexicon=None, bucket_size=1, length_unit=TOKENS):
    """
    :py:class:`AhaStats` per bucket of training steps. ``records`` carry
    ``text``, ``step`` and optionally ``length``; each bucket is labeled with
    its first step.
    """
    if bucket_size < 1:
        raise InvalidInputError("bucket_size must be positive")
    buckets = {}
    for r in records:
        start = (int(r["step"]) // bucket_size) * bucket_size
        buckets.setdefault(start, []).append((r["text"], r.get("length")))
    return [aha_stats(buckets[s], lexicon, length_unit, step=s) for s in sorted(buckets)]


def load_corpus(path):
    """
    Read a JSON-lines corpus of ``{"text": ..., "length": ..., "step": ...}``.

    Returns:
        ``(records, length_unit)``. The unit is ``tokens`` when every record
        carries a length, otherwise every length is a whitespace word count.
    """
    with open(path, 'r') as f:
        records = [json.loads(line) for line in f if line.strip()]
    for i, r in enumerate(records):
        if not isinstance(r, dict) or not isinstance(r.get("text"), str):
            raise InvalidInputError(f"{path}: record {i} has no text")
    if records and all(r.get("length") is not None for r in records):
        return records, TOKENS
    return [dict(r, length=None) for r in records], WORDS


def _open_for_write(path):
    try:
        return open(path, 'w', newline='')
    except OSError as ex:
        raise OSError(ex.errno, f"cannot write {path}: {ex.strerror}", str(path)) from ex


def export_metrics(log, stats, out_dir):
    """
    Write one ``<column>.csv`` (``step,<column>``) per metric series, an
    ``aha.csv`` with one row per :py:class:`AhaStats`, and ``summary.json``.
    The output is byte-stable for identical inputs.

    Returns:
        The sorted list of written paths.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as ex:
        raise OSError(ex.errno, f"cannot create {out_dir}: {ex.strerror}", str(out_dir)) from ex

    written = []
    records = list(log.records) if log is not None else []
    for column in COLUMNS[1:]:
        path = out_dir / f"{column}.csv"
        with _open_for_write(path) as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["step", column])
            for r in records:
                value = getattr(r, column)
                writer.writerow([r.step, "" if isinstance(value, float) and math.isnan(value)
                                 else repr(value) if isinstance(value, float) else value])
        written.append(path)

    stats = list(stats)
    groups = sorted({name for s in stats for name in s.group_counts})
    header = (["step", "total_responses", "aha_count", "mean_len_aha", "mean_len_non_aha",
               "length_unit"]
              + [f"{g}_responses" for g in groups] + [f"{g}_occurrences" for g in groups])
    path = out_dir / "aha.csv"
    with _open_for_write(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for s in stats:
            writer.writerow(
                ["" if s.step is None else s.step, s.total_responses, s.aha_count,
                 "" if s.mean_len_aha is None else repr(s.mean_len_aha),
                 "" if s.mean_len_non_aha is None else repr(s.mean_len_non_aha),
                 s.length_unit]
                + [s.group_counts.get(g, 0) for g in groups]
                + [s.group_occurrences.get(g, 0) for g in groups])
    written.append(path)

    summary = {
        "status": getattr(log, "status", None),
        "steps": len(records),
        "final": records[-1].to_record() if records else None,
        "aha": [s.to_record() for s in stats],
    }
    path = out_dir / "summary.json"
    with _open_for_write(path) as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    written.append(path)
    logger.info("exported %d files to %s", len(written), out_dir)
    return sorted(written)
