"""Line, token and similarity metrics pinned by hand-counted goldens."""

import keyword
import math
import os

import pytest

from evosr.codemetrics import (
    approx_token_count,
    code_similarity,
    code_stats,
    effective_line_count,
    tokenize,
)
from evosr.llm import fallback_source

GOLDEN = os.path.join(os.path.dirname(__file__), "data", "token_golden.py")


# ---------------------------------------------------------------------------
# effective lines


def test_empty_source_has_zero_lines():
    assert effective_line_count("") == 0
    assert effective_line_count("\n\n  \n") == 0


def test_counts_only_code_lines():
    src = "a = 1\n# note\nb = 2\n\nc = 3\n# more\n"
    assert effective_line_count(src) == 3


def test_inline_trailing_comment_still_counts():
    assert effective_line_count("x = 1  # tail\n") == 1
    assert effective_line_count("   # leading whitespace comment\n") == 0


def test_append_blank_and_comment_lines_is_invariant():
    src = "def f():\n    return 1\n"
    assert effective_line_count(src + "\n\n# trailer\n   \n") == effective_line_count(src)


def test_fallback_operator_line_count_golden():
    # the stock tournament fallback weighs in at 10 effective lines
    assert effective_line_count(fallback_source()) == 10


# ---------------------------------------------------------------------------
# tokenizer


def test_simple_assignment_tokens():
    assert tokenize("a = 1") == ["a", "=", "1"]
    assert approx_token_count("a = 1") == 3
    assert approx_token_count("") == 0


def test_comment_tokens_are_dropped():
    assert tokenize("a = 1  # set a") == ["a", "=", "1"]


def test_hash_inside_string_is_not_a_comment():
    assert tokenize('x = "#nope"') == ["x", "=", '"#nope"']


def test_compound_operators_and_numbers():
    assert tokenize("a **= b // 1.5e-3") == ["a", "**=", "b", "//", "1.5e-3"]
    assert tokenize("f(x) -> y := .5") == ["f", "(", "x", ")", "->", "y", ":=", ".5"]


def test_triple_quoted_string_is_one_token():
    src = 'def f():\n    """doc # not comment"""\n    return 0\n'
    toks = tokenize(src)
    assert '"""doc # not comment"""' in toks
    assert toks.count("return") == 1


def test_golden_file_has_57_tokens():
    with open(GOLDEN) as fh:
        src = fh.read()
    assert approx_token_count(src) == 57
    assert effective_line_count(src) == 4


def test_code_stats_is_consistent():
    src = "x = a + b  # sum\n\ny = x * 2\n"
    stats = code_stats(src)
    assert stats.effective_lines == effective_line_count(src)
    assert stats.approx_tokens == len(stats.token_sequence) == approx_token_count(src)
    assert stats.token_sequence == tuple(tokenize(src))


# ---------------------------------------------------------------------------
# similarity


def bleu_oracle(ref_tokens, cand_tokens):
    """Plain-dict restatement of the weighted n-gram precision."""
    if ref_tokens == cand_tokens:
        return 1.0
    if not ref_tokens or not cand_tokens:
        return 0.0

    def weight(gram):
        return 2.0 if any(keyword.iskeyword(t) for t in gram) else 1.0

    logs = []
    for n in range(1, 5):
        cand_grams: dict = {}
        for i in range(len(cand_tokens) - n + 1):
            g = tuple(cand_tokens[i : i + n])
            cand_grams[g] = cand_grams.get(g, 0) + 1
        if not cand_grams:
            break
        ref_grams: dict = {}
        for i in range(len(ref_tokens) - n + 1):
            g = tuple(ref_tokens[i : i + n])
            ref_grams[g] = ref_grams.get(g, 0) + 1
        total = sum(weight(g) * c for g, c in cand_grams.items())
        matched = sum(weight(g) * min(c, ref_grams.get(g, 0)) for g, c in cand_grams.items())
        if matched == 0:
            return 0.0
        logs.append(math.log(matched / total))
    if len(cand_tokens) >= len(ref_tokens):
        brevity = 1.0
    else:
        brevity = math.exp(1.0 - len(ref_tokens) / len(cand_tokens))
    return brevity * math.exp(sum(logs) / len(logs))


REF_PROGRAM = (
    "def pick(xs, k):\n"
    "    out = []\n"
    "    for i in range(k):\n"
    "        out.append(xs[i])\n"
    "    return out\n"
)


def test_identical_sources_score_one():
    assert code_similarity(REF_PROGRAM, REF_PROGRAM) == 1.0


def test_comment_only_difference_scores_one():
    commented = REF_PROGRAM.replace("out = []", "out = []  # accumulator")
    assert code_similarity(REF_PROGRAM, commented) == 1.0


def test_disjoint_tokens_score_zero():
    assert code_similarity("a b c", "d e f") == 0.0


def test_shared_unigrams_but_no_bigrams_score_zero():
    assert code_similarity("a b", "b a") == 0.0


def test_renamed_identifier_matches_independent_oracle():
    cand = REF_PROGRAM.replace("out", "acc")
    got = code_similarity(REF_PROGRAM, cand)
    want = bleu_oracle(tokenize(REF_PROGRAM), tokenize(cand))
    assert got == pytest.approx(want, rel=1e-9)
    assert 0.0 < got < 1.0


def test_random_edits_match_oracle_and_stay_bounded():
    import numpy as np

    rng = np.random.default_rng(0)
    tokens = tokenize(REF_PROGRAM)
    for _ in range(25):
        cand_tokens = list(tokens)
        for _ in range(int(rng.integers(1, 4))):
            cand_tokens[int(rng.integers(len(cand_tokens)))] = str(rng.integers(100))
        cand = " ".join(cand_tokens)
        ref = " ".join(tokens)
        got = code_similarity(ref, cand)
        assert 0.0 <= got <= 1.0
        assert got == pytest.approx(bleu_oracle(tokens, cand_tokens), rel=1e-9, abs=1e-12)


def test_keyword_bearing_misses_cost_more():
    # both candidates replace the same token position, so the miss pattern is
    # identical; only the 2x keyword weight on the missed grams differs
    ref = "a = b and c\nr = a + c\n"
    keyword_miss = "a = b or c\nr = a + c\n"
    plain_miss = "a = b zz c\nr = a + c\n"
    sim_kw = code_similarity(ref, keyword_miss)
    sim_plain = code_similarity(ref, plain_miss)
    assert 0.0 < sim_kw < sim_plain < 1.0
    assert sim_kw == pytest.approx(bleu_oracle(tokenize(ref), tokenize(keyword_miss)), rel=1e-9)
    assert sim_plain == pytest.approx(bleu_oracle(tokenize(ref), tokenize(plain_miss)), rel=1e-9)


def test_brevity_penalty_is_one_sided():
    ref = REF_PROGRAM
    prefix = "def pick(xs, k):\n    out = []\n"
    n_ref = len(tokenize(ref))
    n_prefix = len(tokenize(prefix))
    # a pure prefix matches every n-gram, leaving only the brevity penalty
    assert code_similarity(ref, prefix) == pytest.approx(
        math.exp(1.0 - n_ref / n_prefix), rel=1e-12
    )
    # the other direction dilutes precision but pays no length penalty
    extended = ref + "z = pick([1], 1)\n"
    got = code_similarity(ref, extended)
    assert got == pytest.approx(bleu_oracle(tokenize(ref), tokenize(extended)), rel=1e-9)
    assert 0.0 < got < 1.0
