r"""
Math-answer equivalence.

Both sides are normalized and compared:

- math delimiters (``$``, ``\(``, ``\[``), ``\boxed{}`` and ``\text{}`` are stripped
- ``\dfrac``/``\tfrac`` become ``\frac``, and ``\frac{a}{b}`` becomes ``(a)/(b)``
- whitespace is removed, unicode minus signs unified, redundant unary signs dropped
- trailing zeros after a decimal point are stripped
- a purely numeric expression is evaluated to an exact rational (``0.5`` -> ``1/2``)
  (only a single power with a literal exponent below 100 is evaluated)

A gold answer that is a comma-separated list of options is compared as a set;
a non-empty proper subset of it is a partial match. Anything the rules do not
cover is compared as a string, so an unrecognized form is never reported as
equivalent unless it matches exactly.
"""
import re
import logging
from dataclasses import dataclass

import sympy
from sympy.parsing.sympy_parser import (parse_expr, standard_transformations,
                                        convert_xor, rationalize)

logger = logging.getLogger(__name__)

EQUIVALENT = "equivalent"
PARTIAL = "partial"
DIFFERENT = "different"

_NUMERIC_EXPR = re.compile(r'^[0-9.+\-*/^()]+$')
_SMALL_EXPONENT = re.compile(r'(\^|\*\*)(\([+-]?\d{1,2}\)|[+-]?\d{1,2})(?![\d.])')
_POWER = re.compile(r'\^|\*\*')
_THOUSANDS = re.compile(r'^-?\d{1,3}(,\d{3})+(\.\d+)?$')
_OPTION_SET = re.compile(r'^[^(){}\[\]]+(,[^(){}\[\]]+)+$')
_TRANSFORMS = standard_transformations + (convert_xor, rationalize)


@dataclass(frozen=True)
class EquivalenceVerdict:
    kind: str
    normalized_candidate: str
    normalized_gold: str

    def __post_init__(self):
        if self.kind not in (EQUIVALENT, PARTIAL, DIFFERENT):
            raise ValueError(f"unknown verdict kind {self.kind!r}")

    def to_record(self):
        return {"kind": self.kind,
                "normalized_candidate": self.normalized_candidate,
                "normalized_gold": self.normalized_gold}


def _unwrap_command(s, command):
    """Replace every ``\\command{...}`` (balanced braces) by its contents."""
    marker = "\\" + command + "{"
    while True:
        start = s.find(marker)
        if start < 0:
            return s
        depth = 0
        for end in range(start + len(marker) - 1, len(s)):
            if s[end] == "{":
                depth += 1
            elif s[end] == "}":
                depth -= 1
                if depth == 0:
                    break
        else:
            return s
        s = s[:start] + s[start + len(marker):end] + s[end + 1:]


def _strip_delimiters(s):
    s = s.strip()
    for left, right in (("$$", "$$"), ("$", "$"), ("\\(", "\\)"), ("\\[", "\\]")):
        if len(s) >= len(left) + len(right) and s.startswith(left) and s.endswith(right):
            s = s[len(left):len(s) - len(right)].strip()
    return s


def _fix_fracs(s):
    s = s.replace("\\dfrac", "\\frac").replace("\\tfrac", "\\frac")
    # \frac12 -> \frac{1}{2}
    s = re.sub(r'\\frac(\d)(\d)', r'\\frac{\1}{\2}', s)
    pattern = re.compile(r'\\frac\{([^{}]*)\}\{([^{}]*)\}')
    while True:
        new = pattern.sub(r'(\1)/(\2)', s)
        if new == s:
            return s
        s = new


def _strip_trailing_zeros(s):
    s = re.sub(r'(\d+\.\d*?)0+(?!\d)', r'\1', s)
    return re.sub(r'(\d+)\.(?!\d)', r'\1', s)


def _unify_signs(s):
    s = s.replace("\u2212", "-").replace("\u2013", "-")
    while True:
        new = s.replace("--", "+").replace("+-", "-").replace("-+", "-").replace("++", "+")
        new = re.sub(r'(^|[(*/^])\+', r'\1', new)
        if new == s:
            return s
        s = new


def _as_rational(s):
    """Exact value of a purely numeric expression, or None."""
    if not _NUMERIC_EXPR.match(s) or len(s) > 64:
        return None
    # at most one power, with a literal exponent below 100; towers never reach sympy
    powers = len(_POWER.findall(s))
    if powers > 1 or (powers == 1 and not _SMALL_EXPONENT.search(s)):
        return None
    try:
        value = parse_expr(s, transformations=_TRANSFORMS, evaluate=True)
    except Exception:
        return None
    if isinstance(value, sympy.Rational) and value.is_finite:
        return value
    return None


def normalize(text):
    """Canonical form of a single answer. ``normalize(normalize(x)) == normalize(x)``."""
    s = _strip_delimiters(str(text))
    for command in ("boxed", "text", "mathrm"):
        s = _unwrap_command(s, command)
    s = s.replace("\\left", "").replace("\\right", "").replace("\\!", "").replace("\\,", "")
    s = _fix_fracs(s)
    s = re.sub(r'\s+', '', s)
    if _THOUSANDS.match(s):
        s = s.replace(",", "")
    s = _unify_signs(s)
    s = _strip_trailing_zeros(s)
    value = _as_rational(s)
    if value is not None:
        return str(value)
    return s


def _options(text):
    """The normalized option set of a comma-separated answer, or None."""
    s = _strip_delimiters(str(text))
    if not _OPTION_SET.match(s) or _THOUSANDS.match(re.sub(r'\s+', '', s)):
        return None
    options = frozenset(normalize(part) for part in s.split(","))
    return None if "" in options else options


def math_equivalent(candidate, gold):
    """
    Compare a candidate answer against the gold answer.

    Returns:
        :py:class:`EquivalenceVerdict`; ``kind`` is ``"partial"`` only when the
        gold answer is a set of options and the candidate names a non-empty
        proper subset of it.
    """
    if candidate is None:
        return EquivalenceVerdict(DIFFERENT, "", normalize(gold))
    gold_options = _options(gold)
    cand_options = _options(candidate)
    if gold_options is not None and len(gold_options) > 1:
        cand_set = cand_options if cand_options is not None else frozenset([normalize(candidate)])
        norm_cand = ",".join(sorted(cand_set))
        norm_gold = ",".join(sorted(gold_options))
        if cand_set == gold_options:
            kind = EQUIVALENT
        elif cand_set and cand_set < gold_options:
            kind = PARTIAL
        else:
            kind = DIFFERENT
        return EquivalenceVerdict(kind, norm_cand, norm_gold)
    if cand_options is not None and len(cand_options) > 1:
        norm_cand = ",".join(sorted(cand_options))
        return EquivalenceVerdict(DIFFERENT, norm_cand, normalize(gold))

    norm_cand = normalize(candidate)
    norm_gold = normalize(gold)
    kind = EQUIVALENT if norm_cand == norm_gold else DIFFERENT
    logger.debug("math_equivalent %r vs %r -> %s", norm_cand, norm_gold, kind)
    return EquivalenceVerdict(kind, norm_cand, norm_gold)
