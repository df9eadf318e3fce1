from hypothesis import given, strategies as st

from firmtriage.sbom import extract_version_strings, names_match, printable_runs


def test_busybox_banner():
    data = b"\0\0BusyBox v1.19.4 (2017-05-17)\0"
    assert extract_version_strings(data) == [("BusyBox", "1.19.4")]


def test_short_runs_yield_nothing():
    assert extract_version_strings(b"a 1.2\0x\0" * 5) == []
    assert extract_version_strings(b"") == []


def test_hint_ranks_matching_product_first():
    data = b"\0zlib 1.2.8\0\0dropbear_2015.67\0"
    assert extract_version_strings(data)[0] == ("zlib", "1.2.8")
    ranked = extract_version_strings(data, "dropbear")
    assert ranked == [("dropbear", "2015.67"), ("zlib", "1.2.8")]


def test_letter_suffix_and_joined_forms():
    data = b"\0OpenSSL 1.0.2k  26 Jan 2017\0lighttpd/1.4.35\0zlib-1.2.11\0"
    assert extract_version_strings(data) == [
        ("OpenSSL", "1.0.2k"), ("lighttpd", "1.4.35"), ("zlib", "1.2.11")]


def test_dates_and_ips_are_not_versions():
    data = b"\0built 2017-05-17 on host 10.0.0.1:80\0"
    assert extract_version_strings(data) == []


def test_names_match_rules():
    assert names_match("OpenSSL", "openssl")
    assert names_match("BusyBox", "busybox")
    assert names_match("dropbear", "dropbearmulti")
    assert not names_match("ab", "abc")
    assert not names_match("zlib", "dropbear")


def test_printable_runs_offsets():
    assert printable_runs(b"\x01abcdef\x02gh\x00ijklmn") == [(1, "abcdef"), (11, "ijklmn")]


@given(st.binary(max_size=2048), st.text("abcxyz", max_size=5))
def test_candidates_are_distinct_and_hint_first(data, hint):
    out = extract_version_strings(data, hint)
    assert len(out) == len(set(out))
    tiers = [0 if hint and p.lower() == hint else 1 for p, _ in out]
    assert tiers == sorted(tiers)
