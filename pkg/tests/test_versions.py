from itertools import combinations

import pytest
from hypothesis import given, strategies as st

from firmtriage.errors import UnparseableVersion
from firmtriage.matching import compare_versions, version_in_range, version_key

from oracles import LETTERS, simple_less


@pytest.mark.parametrize("args,expected", [
    (("1.2.3", "1.2.0", "1.3.0"), True),
    (("1.0.2k", "1.0.2", "1.0.2l"), True),
    (("2.0.0", "1.0.0", "2.0.0"), False),
    (("1.0.0", "1.0.0", "2.0.0"), True),
    (("0.9", "1.0", None), False),
    (("99.0", "1.0", None), True),
    (("2015.67", "0", "2016.74"), True),
])
def test_examples(args, expected):
    assert version_in_range(*args) is expected


def test_letter_suffix_exhaustive():
    chain = ["1.0.2"] + [f"1.0.2{c}" for c in LETTERS] + ["1.0.3"]
    for i, j in combinations(range(len(chain)), 2):
        assert compare_versions(chain[i], chain[j]) == -1, (chain[i], chain[j])
    for c in LETTERS[:-1]:
        nxt = LETTERS[LETTERS.index(c) + 1]
        assert version_in_range(f"1.0.2{c}", "1.0.2", f"1.0.2{nxt}")
        assert not version_in_range(f"1.0.2{nxt}", "1.0.2", f"1.0.2{nxt}")


def test_trailing_zeros_and_separators():
    assert compare_versions("1.0", "1.0.0") == 0
    assert compare_versions("2019.78-1", "2019.78") == 1
    assert compare_versions("1.10", "1.9") == 1


def test_alpha_segments_after_numeric():
    assert compare_versions("1.0-rc1", "1.0-beta") == 1
    assert compare_versions("1.0.beta", "1.0.1") == 1


@pytest.mark.parametrize("bad", ["", "1..2", "1.2_3", "1.*", "1.2 3"])
def test_unparseable(bad):
    with pytest.raises(UnparseableVersion):
        version_key(bad)


def test_sentinel_rejected():
    with pytest.raises(ValueError):
        version_in_range("0.0.0-unknown", "0")


_simple = st.from_regex(r"\A\d{1,3}(\.\d{1,3}){0,3}[a-z]?\Z")


@given(_simple, _simple)
def test_ordering_matches_oracle(a, b):
    assert (compare_versions(a, b) < 0) == simple_less(a, b)
    assert compare_versions(a, b) == -compare_versions(b, a)


@given(_simple, _simple, _simple)
def test_half_open(v, lo, hi):
    if simple_less(hi, lo):
        lo, hi = hi, lo
    assert not version_in_range(hi, lo, hi)
    assert version_in_range(v, lo, hi) == (not simple_less(v, lo) and simple_less(v, hi))
