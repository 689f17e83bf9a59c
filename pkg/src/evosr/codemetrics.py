"""Lightweight static measures of candidate operator source code.

Line counts drive the dominance comparisons, the tokenizer feeds both the
token budget logs and the n-gram similarity used by survival selection.
The similarity is a keyword-weighted 1-4-gram precision score with a
brevity penalty: cheap, order-sensitive, and 1.0 exactly on identical
token sequences.
"""

from __future__ import annotations

import keyword
import math
import re
from collections import Counter
from dataclasses import dataclass

MAX_NGRAM = 4
KEYWORD_WEIGHT = 2.0

# One pass over the source: comments are recognized (and dropped) in the
# same alternation as strings, so '#' inside a literal is not a comment.
_TOKEN_RE = re.compile(
    r'(?P<comment>#[^\n]*)'
    r'|"""(?:\\.|[^\\])*?"""'
    r"|'''(?:\\.|[^\\])*?'''"
    r'|"(?:\\.|[^"\\\n])*"'
    r"|'(?:\\.|[^'\\\n])*'"
    r"|[A-Za-z_]\w*"
    r"|\d+(?:\.\d*)?(?:[eE][+-]?\d+)?"
    r"|\.\d+(?:[eE][+-]?\d+)?"
    r"|\*\*=?|//=?|<<=?|>>=?|<=|>=|==|!=|->|:=|[+\-*/%@&|^=<>]=?|~"
    r"|[()\[\]{},:;.]"
)


@dataclass(frozen=True)
class CodeStats:
    effective_lines: int
    approx_tokens: int
    token_sequence: tuple


def effective_line_count(source: str) -> int:
    """Lines that are neither blank nor pure '#' comments."""
    count = 0
    for line in source.splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            count += 1
    return count


def tokenize(source: str) -> list[str]:
    """Lexical tokens (identifiers, numbers, strings, operators, punctuation)."""
    tokens = []
    for m in _TOKEN_RE.finditer(source):
        if m.lastgroup == "comment":
            continue
        tokens.append(m.group())
    return tokens


def approx_token_count(source: str) -> int:
    return len(tokenize(source))


def code_stats(source: str) -> CodeStats:
    tokens = tokenize(source)
    return CodeStats(
        effective_lines=effective_line_count(source),
        approx_tokens=len(tokens),
        token_sequence=tuple(tokens),
    )


def _ngram_weight(gram: tuple) -> float:
    return KEYWORD_WEIGHT if any(keyword.iskeyword(tok) for tok in gram) else 1.0


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def code_similarity(reference: str, candidate: str) -> float:
    """Keyword-weighted n-gram precision of candidate against reference.

    Modified (clipped) precisions for n = 1..4 are combined by geometric
    mean and scaled by the usual brevity penalty.  Identical token
    sequences score exactly 1.0; token-disjoint sources score 0.0.
    """
    ref = tokenize(reference)
    cand = tokenize(candidate)
    if ref == cand:
        return 1.0
    if not ref or not cand:
        return 0.0

    log_sum = 0.0
    orders = 0
    for n in range(1, MAX_NGRAM + 1):
        cand_grams = _ngrams(cand, n)
        if not cand_grams:
            break
        ref_grams = _ngrams(ref, n)
        total = sum(_ngram_weight(g) * c for g, c in cand_grams.items())
        matched = sum(
            _ngram_weight(g) * min(c, ref_grams.get(g, 0))
            for g, c in cand_grams.items()
        )
        if matched == 0:
            return 0.0
        log_sum += math.log(matched / total)
        orders += 1

    brevity = 1.0 if len(cand) >= len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return brevity * math.exp(log_sum / orders)
