import json
import math
from dataclasses import replace
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dbound.channel import ChannelModel
from dbound.core import BitLengthError, BitString, RngStream, random_bits
from dbound.protocols import (
    FinalMessage,
    HonestProver,
    HonestTag,
    ProtocolId,
    ProtocolParams,
    ReaderDatabase,
    TagIdentity,
    compute_final_tag,
    compute_reader_tag,
    hitomi_prepare,
    prepare_shares,
    reid_prepare,
    run_session,
    swiss_knife_prepare,
    tag_respond,
    verify,
)

GOLDEN = Path(__file__).parent / "golden"
ALL = list(ProtocolId)


def keys(n):
    return st.integers(0, (1 << n) - 1).map(lambda v: BitString(v, n))


def sk(n=16, **kw):
    return ProtocolParams(ProtocolId.SWISS_KNIFE, n, **kw)


def hit(n=16, **kw):
    return ProtocolParams(ProtocolId.HITOMI, n, **kw)


# ---- parameters and records ---------------------------------------------


def test_params_validation():
    with pytest.raises(ValueError):
        sk(0)
    with pytest.raises(ValueError):
        sk(8, tau=10)
    with pytest.raises(ValueError):
        sk(8, t_max=0)
    assert sk(8, tau=9).tau == 9  # n + 1 disables rejection
    assert ProtocolId.parse("reid") is ProtocolId.REID_SPLIT
    assert sk(8).nonce_len == 8 and sk(8, nonce_bits=3).nonce_len == 3


def test_database_ids_unique():
    t = TagIdentity(BitString(1, 8), BitString(0, 8))
    with pytest.raises(ValueError):
        ReaderDatabase([t, TagIdentity(BitString(1, 8), BitString(1, 8))])
    db = ReaderDatabase.random(RngStream(0, "db"), 50, 8)
    assert len(db) == 50 and len({t.id for t in db}) == 50


# ---- key shares ----------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(keys(16), keys(16))
def test_swiss_knife_shares_xor_to_key(x, nb):
    s = swiss_knife_prepare(x, nb, sk())
    assert s.z0 ^ s.z1 == x
    assert s.z0 == s.a
    assert swiss_knife_prepare(x, nb, sk()) == s


def test_zero_key_gives_equal_shares():
    s = swiss_knife_prepare(BitString.zeros(16), BitString(99, 16), sk())
    assert s.z0 == s.z1


def test_swiss_knife_length_checks():
    with pytest.raises(BitLengthError):
        swiss_knife_prepare(BitString(0, 15), BitString(0, 16), sk())


@settings(max_examples=40, deadline=None)
@given(keys(16), keys(16), keys(16), keys(16), keys(16))
def test_hitomi_share_structure(x, nr, t1, t2, t3):
    p = hit()
    s = hitomi_prepare(x, nr, t1, t2, t3, p)
    assert s.z0 == s.a and s.z1 == s.b ^ x
    assert s.z0 ^ s.z1 == s.a ^ s.b ^ x
    s2 = hitomi_prepare(x, nr, t1, t2, t3.flip(0), p)
    assert s2.a == s.a and s2.b != s.b
    assert hitomi_prepare(x, nr, t1, t2, t3, p) == s


def test_hitomi_shares_rarely_xor_to_key():
    r = RngStream(0, "hitomi-shares")
    hits = 0
    for _ in range(1000):
        x, nr, t1, t2, t3 = (random_bits(r, 16) for _ in range(5))
        s = hitomi_prepare(x, nr, t1, t2, t3, hit())
        hits += (s.z0 ^ s.z1) == x
    assert hits / 1000 <= 2**-10


def test_reid_shares_depend_on_both_nonces():
    x, tid = BitString(0x1234, 16), BitString(7, 32)
    p = ProtocolParams("reid-split", 16)
    s = reid_prepare(x, tid, BitString(1, 16), BitString(2, 16), p)
    assert s.z0 ^ s.z1 == x
    assert reid_prepare(x, tid, BitString(3, 16), BitString(2, 16), p).a != s.a


def test_tag_respond_rule():
    x = BitString(0b10110010, 8)
    s = swiss_knife_prepare(x, BitString(5, 8), sk(8))
    for i in range(8):
        assert tag_respond(s, 0, i) == s.z0[i]
        assert tag_respond(s, 1, i) == s.z1[i]
        assert tag_respond(s, 0, i) ^ tag_respond(s, 1, i) == x[i]
    with pytest.raises(IndexError):
        tag_respond(s, 0, 8)
    with pytest.raises(ValueError):
        tag_respond(s, 2, 0)


# ---- final and reader tags ----------------------------------------------


def _nonces(protocol, r):
    if protocol is ProtocolId.HITOMI:
        return {k: random_bits(r, 16) for k in ("N_R", "N_T1", "N_T2", "N_T3")}
    return {"N_A": random_bits(r, 16), "N_B": random_bits(r, 16)}


def test_swiss_knife_final_tag_avalanche_on_echo():
    r = RngStream(1, "ft")
    x, tid = random_bits(r, 16), random_bits(r, 32)
    nonces = _nonces(ProtocolId.SWISS_KNIFE, r)
    c = random_bits(r, 16)
    base = compute_final_tag("swiss-knife", x, tid, c, nonces, sk())
    assert base == compute_final_tag("swiss-knife", x, tid, c, nonces, sk())
    for i in range(16):
        assert compute_final_tag("swiss-knife", x, tid, c.flip(i), nonces, sk()) != base


def test_hitomi_final_tag_binds_responses():
    r = RngStream(2, "ft")
    x, tid = random_bits(r, 16), random_bits(r, 32)
    nonces = _nonces(ProtocolId.HITOMI, r)
    m = random_bits(r, 32)
    base = compute_final_tag("hitomi", x, tid, m, nonces, hit())
    assert compute_final_tag("hitomi", x, tid, m.flip(20), nonces, hit()) != base  # an r' bit
    with pytest.raises(BitLengthError):
        compute_final_tag("hitomi", x, tid, m.slice(0, 16), nonces, hit())


def test_final_tag_missing_arguments():
    x, tid = BitString(1, 16), BitString(1, 32)
    with pytest.raises(ValueError):
        compute_final_tag("swiss-knife", x, tid, BitString(0, 16), {"N_B": BitString(0, 16)}, sk())
    with pytest.raises(ValueError):
        compute_final_tag("reid-split", x, tid, BitString(0, 16), {}, sk())
    with pytest.raises(ValueError):
        compute_final_tag("swiss-knife", x, None, BitString(0, 16), {}, sk())


def test_reader_tag_arguments():
    r = RngStream(3, "rt")
    x = random_bits(r, 16)
    n = _nonces(ProtocolId.SWISS_KNIFE, r)
    t = compute_reader_tag("swiss-knife", x, n, None, sk())
    assert t == compute_reader_tag("swiss-knife", x, {**n, "N_A": n["N_A"].flip(0)}, None, sk())
    assert t != compute_reader_tag("swiss-knife", x, {**n, "N_B": n["N_B"].flip(0)}, None, sk())
    h = _nonces(ProtocolId.HITOMI, r)
    b = random_bits(r, 16)
    assert compute_reader_tag("hitomi", x, h, b, hit()) != compute_reader_tag("hitomi", x, h, b.flip(3), hit())
    with pytest.raises(ValueError):
        compute_reader_tag("hitomi", x, h, None, hit())


# ---- sessions ------------------------------------------------------------


@pytest.mark.parametrize("protocol", ALL)
def test_honest_completeness(protocol):
    for n in range(1, 33):
        p = ProtocolParams(protocol, n)
        for k in range(100 if n in (1, 8, 32) else 6):
            rng = RngStream(k, f"complete/{protocol.value}/{n}")
            tag = TagIdentity.random(rng.child("tag"), n)
            t = run_session(p, tag, ReaderDatabase([tag]), rng=rng.child("s"))
            v = t.verdict
            assert (v.err_c, v.err_r, v.err_t) == (0, 0, 0)
            assert v.accepted and v.reader_auth_ok and v.lookup_ok


@pytest.mark.parametrize("protocol", ALL)
def test_slow_tag_is_rejected(protocol):
    p = ProtocolParams(protocol, 12, tau=12, t_max=1.0)
    tag = TagIdentity.random(RngStream(0, "slow"), 12)
    t = run_session(p, tag, ReaderDatabase([tag]), actor=HonestTag(latency=3.0), rng=RngStream(1, "slow"))
    assert t.verdict.err_t == 12 and not t.verdict.accepted


def per_round_error_oracle(q):
    """Enumerate (forward flip, backward flip); an error occurs unless neither flips."""
    p = 0.0
    for f in (0, 1):
        for b in (0, 1):
            prob = (q if f else 1 - q) * (q if b else 1 - q)
            err = 1 if f else b  # err_c on a forward flip, else err_r on a backward flip
            p += prob * err
    return p


@pytest.mark.parametrize("protocol", [ProtocolId.SWISS_KNIFE, ProtocolId.HITOMI])
def test_noisy_error_count_matches_oracle(protocol):
    n, q, trials = 30, 0.03, 10_000
    p = ProtocolParams(protocol, n, tau=n + 1, prf="mix64")
    ch = ChannelModel(q)
    root = RngStream(11, "noisy-honest")
    tag = TagIdentity.random(root.child("tag"), n)
    db = ReaderDatabase([tag])
    total = 0
    for i in range(trials):
        v = run_session(p, tag, db, ch, ch, rng=root.child(str(i))).verdict
        total += v.err_c + v.err_r
    pe = per_round_error_oracle(q)
    assert math.isclose(pe, 2 * q - q * q)
    mean, sigma = n * pe, math.sqrt(n * pe * (1 - pe) / trials)
    assert abs(total / trials - mean) <= 3 * sigma


def recount(t, tau, t_max):
    """Error counts from both endpoints' records, without recomputing any share."""
    ec = er = et = 0
    for rd in t.rounds:
        if rd.c_sent != rd.c_received:
            ec += 1
            continue
        er += rd.r_received != rd.r_sent
        et += rd.latency > t_max
    return ec, er, et


@pytest.mark.parametrize("protocol", [ProtocolId.SWISS_KNIFE, ProtocolId.HITOMI])
def test_verdict_matches_independent_recount(protocol):
    p = ProtocolParams(protocol, 16, tau=4)
    ch = ChannelModel(0.1)
    for i in range(200):
        rng = RngStream(i, "recount")
        tag = TagIdentity.random(rng.child("tag"), 16)
        lat = 0.5 if i % 3 else 1.5
        t = run_session(p, tag, ReaderDatabase([tag]), ch, ch, actor=HonestTag(lat), rng=rng.child("s"))
        v = t.verdict
        assert (v.err_c, v.err_r, v.err_t) == recount(t, p.tau, p.t_max)
        assert v.accepted == (v.total_errors < p.tau)


class _TamperedProver(HonestProver):
    """Honest tag whose challenges were altered in transit in two rounds."""

    def respond(self, i, c):
        return super().respond(i, c ^ (i in (2, 5)))


class _Tampered:
    def prover(self, params, tag, rng):
        return _TamperedProver(params, tag, rng)


def test_altered_challenges_count_as_err_c():
    p = sk(8, tau=3)
    tag = TagIdentity.random(RngStream(0, "tamper"), 8)
    v = run_session(p, tag, ReaderDatabase([tag]), actor=_Tampered(), rng=RngStream(1, "tamper")).verdict
    assert v.err_c == 2 and v.err_r == 0 and v.accepted


def test_lookup_failure_rejects():
    p = sk(16)
    tag = TagIdentity.random(RngStream(0, "lf"), 16)
    other = TagIdentity.random(RngStream(1, "lf"), 16)
    t = run_session(p, tag, ReaderDatabase([other]), rng=RngStream(2, "lf"))
    assert not t.verdict.lookup_ok and not t.verdict.accepted
    forged = replace(t, final=FinalMessage(t.final.t_b.flip(0), t.final.echo), verdict=None)
    assert not verify(forged, ReaderDatabase([tag]), p).lookup_ok


def test_lookup_identifies_the_right_tag():
    n = 32
    db = ReaderDatabase.random(RngStream(0, "db100"), 100, n)
    tags = list(db)
    p = sk(n)
    for i in range(1000):
        tag = tags[i % 100]
        t = run_session(p, tag, db, rng=RngStream(i, "lookup"))
        assert t.verdict.tag_id == tag.id and t.verdict.accepted


def test_hitomi_m_is_echo_and_responses():
    p = hit(8)
    tag = TagIdentity.random(RngStream(0, "m"), 8)
    t = run_session(p, tag, ReaderDatabase([tag]), ChannelModel(0.2), ChannelModel(0.2), rng=RngStream(1, "m"))
    assert t.m.length == 16
    assert t.m == BitString.from_bits([r.c_received for r in t.rounds] + [r.r_sent for r in t.rounds])
    assert len(t.rounds) == 8


def test_shares_from_transcript_nonces():
    p = sk(8)
    tag = TagIdentity.random(RngStream(0, "tn"), 8)
    t = run_session(p, tag, ReaderDatabase([tag]), rng=RngStream(1, "tn"))
    s = prepare_shares(p, tag, t.nonces)
    assert [r.r_sent for r in t.rounds] == [s.share(r.c_received)[i] for i, r in enumerate(t.rounds)]


@pytest.mark.parametrize("protocol", ALL)
def test_golden_transcripts(protocol):
    rng = RngStream(2024, "golden")
    p = ProtocolParams(protocol, 8, tau=3)
    tag = TagIdentity.random(rng.child("tag"), 8)
    t = run_session(p, tag, ReaderDatabase([tag]), ChannelModel(0.1), ChannelModel(0.1), rng=rng.child("session"))
    golden = json.loads((GOLDEN / f"transcript_{protocol.value}_n8.json").read_text())
    assert t.to_dict() == golden
    assert set(golden) >= {"protocol", "n", "nonces", "rounds", "t_b", "t_a", "verdict"}
    assert set(golden["rounds"][0]) == {"c", "c_recv", "r", "r_recv", "latency"}
