import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from firmtriage.extraction import normalize
from firmtriage.feeds import EnrichmentSnapshot
from firmtriage.matching import Confidence, MatchTier, RawMatch, VulnRecord
from firmtriage.sbom import Component, ComponentKind, EvidenceKind
from firmtriage.scoring import (Band, BandThresholds, ScoreFactors, ScoreWeights, SignalKind,
                                apply_confidence_penalty, assign_band, compute_rps,
                                context_factor, exploit_factor, rank, score_match)

from conftest import write_tree


def _comp(name, path, evidence=EvidenceKind.VERSION_STRING, version="1.0"):
    return Component(name, version, ComponentKind.EXECUTABLE, evidence, (path,))


def _fs(tmp_path, tree):
    return normalize(write_tree(tmp_path / "root", {"bin": None, "etc": None, "lib": None} | tree))


def test_exploit_factor():
    assert exploit_factor(0.05, True) == (10.0, False)
    assert exploit_factor(0.97, False) == (9.7, False)
    assert exploit_factor(None, False) == (0.0, True)
    with pytest.raises(ValueError):
        exploit_factor(1.2, False)


def test_rps_examples():
    assert compute_rps(ScoreFactors(7.5, 10, 10)) == 92.5
    assert compute_rps(ScoreFactors(0, 0, 0)) == 0
    assert compute_rps(ScoreFactors(10, 10, 10)) == 100


def test_penalty_examples():
    assert apply_confidence_penalty(92.5, Confidence.HIGH) == 92.5
    assert apply_confidence_penalty(92.5, Confidence.LOW) == 46.25
    assert apply_confidence_penalty(0, Confidence.MEDIUM) == 0


@pytest.mark.parametrize("score,band", [(92.5, Band.CRITICAL), (0, Band.LOW), (70.0, Band.HIGH),
                                        (90.0, Band.CRITICAL), (89.99, Band.HIGH),
                                        (40.0, Band.MEDIUM), (39.99, Band.LOW), (100, Band.CRITICAL)])
def test_bands(score, band):
    assert assign_band(score) is band


def test_bad_configuration_rejected():
    with pytest.raises(ValueError):
        BandThresholds(critical=60, high=70, medium=40)
    with pytest.raises(ValueError):
        ScoreWeights(5, 5, 5)
    with pytest.raises(ValueError):
        ScoreFactors(11, 0, 5)


def test_init_script_signal(tmp_path):
    fs = _fs(tmp_path, {"etc/init.d/dropbear": b"#!/bin/sh\n", "usr/bin/dropbear": b"x"})
    c, signals = context_factor(_comp("dropbear", "/usr/bin/dropbear"), fs)
    assert c == 10
    assert [(s.kind, s.evidence_path) for s in signals] == [(SignalKind.INIT_SCRIPT, "/etc/init.d/dropbear")]


def test_no_signal_default(tmp_path):
    fs = _fs(tmp_path, {"usr/bin/tool": b"x", "etc/passwd": b""})
    assert context_factor(_comp("tool", "/usr/bin/tool"), fs) == (5.0, [])


def test_config_file_and_port(tmp_path):
    conf = b'# lighttpd\nserver.document-root = "/www"\nserver.port = 8080\n'
    fs = _fs(tmp_path, {"etc/lighttpd.conf": conf, "usr/bin/lighttpd": b"x"})
    c, signals = context_factor(_comp("lighttpd", "/usr/bin/lighttpd"), fs)
    assert c == 10
    assert [(s.kind, s.detail) for s in signals] == [(SignalKind.CONFIG_FILE, ""),
                                                     (SignalKind.OPEN_PORT, "8080")]


def test_rc_prefix_systemd_and_critical_path(tmp_path):
    fs = _fs(tmp_path, {
        "etc/rc.d/S50sshd": b"", "usr/sbin/sshd": b"x",
        "lib/systemd/system/sshd.service": b"[Service]\nExecStart=/usr/sbin/sshd -D\n",
        "etc/ssh/sshd_config": b"Port 22\nListenAddress 0.0.0.0:2222\n",
    })
    c, signals = context_factor(_comp("sshd", "/usr/sbin/sshd"), fs)
    kinds = [s.kind for s in signals]
    assert c == 10
    assert kinds.count(SignalKind.INIT_SCRIPT) == 2
    assert SignalKind.CRITICAL_PATH in kinds
    ports = [s.detail for s in signals if s.kind is SignalKind.OPEN_PORT]
    assert ports == ["22", "2222"]


def _match(confidence, cvss=7.5, vid="CVE-2016-7406", comp=None):
    rec = VulnRecord(vid, (), cvss)
    comp = comp or _comp("dropbear", "/usr/sbin/dropbear")
    return RawMatch(comp, rec, MatchTier.NAME_HASH, confidence)


def test_score_match_worked_example(tmp_path):
    fs = _fs(tmp_path, {"etc/init.d/dropbear": b"", "usr/bin/dropbear": b""})
    snap = EnrichmentSnapshot({"CVE-2016-7406": 0.05}, {"CVE-2016-7406"})
    f = score_match(_match(Confidence.HIGH, comp=_comp("dropbear", "/usr/bin/dropbear")), snap, fs)
    assert (f.factors.b, f.factors.e, f.factors.c) == (7.5, 10.0, 10.0)
    assert f.rps == 92.5 and f.adjusted_rps == 92.5 and f.band is Band.CRITICAL
    assert f.kev and f.epss == 0.05


def test_defaults_flagged():
    f = score_match(_match(Confidence.MEDIUM, cvss=None), EnrichmentSnapshot(), None)
    assert f.factors.b == 5.0 and f.factors.b_defaulted
    assert f.factors.e == 0.0 and f.factors.e_missing
    assert f.factors.c == 5.0
    assert f.rps == 30.0


def _finding(score, kev, vid):
    comp = _comp("x", "/bin/x")
    f = score_match(_match(Confidence.HIGH, vid=vid, comp=comp), EnrichmentSnapshot(), None)
    return f.__class__(**{**f.__dict__, "adjusted_rps": score, "kev": kev})


def test_rank_tie_breaks():
    a = _finding(92.5, False, "CVE-2020-0002")
    b = _finding(46.25, True, "CVE-2020-0001")
    c = _finding(92.5, True, "CVE-2020-0003")
    d = _finding(92.5, False, "CVE-2020-0001")
    assert [f.vuln_id for f in rank([a, b, c, d])] == [
        "CVE-2020-0003", "CVE-2020-0001", "CVE-2020-0002", "CVE-2020-0001"]
    assert rank([a, b, c, d])[-1] is b


_factor = st.floats(0, 10, allow_nan=False)
_prob = st.floats(0, 1, allow_nan=False)


@given(_factor, _factor, _factor)
def test_bounds(b, e, c):
    assert 0 <= compute_rps(ScoreFactors(b, e, c)) <= 100
    if c >= 5:
        assert compute_rps(ScoreFactors(b, e, c)) >= 15


@given(_factor, _factor, _factor, _factor)
def test_monotone(b, e, c, bump):
    base = compute_rps(ScoreFactors(b, e, c))
    for i in range(3):
        vals = [b, e, c]
        vals[i] = max(vals[i], bump)
        assert compute_rps(ScoreFactors(*vals)) >= base


@given(_prob, _factor, _factor)
def test_kev_dominance(p, b, c):
    e_kev, _ = exploit_factor(p, True)
    e_plain, _ = exploit_factor(p, False)
    assert e_kev == 10
    assert compute_rps(ScoreFactors(b, e_kev, c)) >= compute_rps(ScoreFactors(b, e_plain, c))


@given(st.floats(0, 100, allow_nan=False))
def test_bands_partition(score):
    hits = [band for band, lo, hi in BandThresholds().intervals()
            if lo <= score < hi or (hi == 100 and score == 100)]
    assert hits == [assign_band(score)]


@given(st.lists(st.tuples(_factor, _prob, st.booleans()), min_size=1, max_size=12),
       st.sampled_from(list(Confidence)))
def test_uniform_confidence_preserves_order(rows, conf):
    snap_epss, kev, matches = {}, set(), []
    for i, (b, p, in_kev) in enumerate(rows):
        vid = f"CVE-2020-{i:04d}"
        snap_epss[vid] = p
        if in_kev:
            kev.add(vid)
        matches.append(_match(conf, cvss=b, vid=vid, comp=_comp(f"c{i}", f"/bin/c{i}")))
    snap = EnrichmentSnapshot(snap_epss, kev)
    findings = [score_match(m, snap, None) for m in matches]
    by_adjusted = [f.rps for f in rank(findings)]
    assert by_adjusted == sorted(by_adjusted, reverse=True)


def test_exact_rational_arithmetic():
    # oracle: exact fractions for the worked example
    rps = Fraction("7.5") * 3 + Fraction(10) * 4 + Fraction(10) * 3
    assert rps == Fraction(185, 2) == Fraction(compute_rps(ScoreFactors(7.5, 10, 10)))
    rng = random.Random(3)
    for _ in range(200):
        b = rng.randint(0, 100) / 10
        assert compute_rps(ScoreFactors(b, 0, 5)) == pytest.approx(float(Fraction(str(b)) * 3 + 15))
