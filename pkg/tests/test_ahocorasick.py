import random

import pytest

from genqa.ahocorasick import AhoCorasick, naive_findall


def as_set(matches):
    return {(p, lo, hi) for p, lo, hi in matches}


def test_single_pattern_tail_match():
    ac = AhoCorasick(["yao ming"])
    assert ac.findall("how tall is yao ming") == [("yao ming", 12, 20)]


def test_no_match():
    ac = AhoCorasick(["zebra"])
    assert ac.findall("plain text with nothing") == []


def test_overlapping_and_nested_matches():
    ac = AhoCorasick(["aba", "ba", "a"])
    text = "ababa"
    assert as_set(ac.findall(text)) == as_set(naive_findall(["aba", "ba", "a"], text))


def test_suffix_patterns_via_failure_links():
    # "he" ends inside "she"; "hers" shares the prefix path.
    ac = AhoCorasick(["he", "she", "his", "hers"])
    text = "ushers"
    assert as_set(ac.findall(text)) == as_set(
        naive_findall(["he", "she", "his", "hers"], text)
    )


def test_duplicate_patterns_collapse():
    ac = AhoCorasick(["ab", "ab"])
    assert ac.findall("abab") == [("ab", 0, 2), ("ab", 2, 4)]


def test_empty_pattern_rejected():
    with pytest.raises(ValueError):
        AhoCorasick(["ok", ""])


def test_randomized_against_naive_oracle():
    rnd = random.Random(42)
    for _ in range(200):
        n_pat = rnd.randint(1, 8)
        patterns = [
            "".join(rnd.choice("abc") for _ in range(rnd.randint(1, 5)))
            for _ in range(n_pat)
        ]
        text = "".join(rnd.choice("abc ") for _ in range(rnd.randint(0, 60)))
        ac = AhoCorasick(patterns)
        assert as_set(ac.findall(text)) == as_set(naive_findall(patterns, text))


def test_exhaustive_small_alphabet_sweep():
    # Every text over {a, b} up to length 7 against all patterns of length <= 3.
    patterns = [
        "".join(p)
        for k in (1, 2, 3)
        for p in __import__("itertools").product("ab", repeat=k)
    ]
    ac = AhoCorasick(patterns)
    from itertools import product

    for length in range(0, 8):
        for chars in product("ab", repeat=length):
            text = "".join(chars)
            assert as_set(ac.findall(text)) == as_set(naive_findall(patterns, text))
