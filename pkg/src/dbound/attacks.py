"""Passive dictionary attack on split-key distance-bounding protocols.

Against Swiss-Knife (and the Reid-style reference) the two response shares
satisfy ``Z^0 xor Z^1 = x``.  An eavesdropper that sees two sessions with the
same session nonce and different challenge bits learns the key bits where the
challenges differ.  The attacker keeps a dictionary from nonce to the last
observed (c, r) pair and reconciles on every hit.

Two implementations share one session generator:

* :class:`DictionaryAttack` consumes :class:`EavesdroppedSession` views one
  at a time.  It is the reference and also accepts views built from
  :func:`dbound.protocols.run_session` transcripts.
* :func:`dictionary_attack_ideal`, :func:`dictionary_attack_noisy` and
  :func:`attack_hitomi` run a vectorised engine that generates sessions in
  fixed blocks, finds dictionary hits with a stable sort and evaluates the PRF
  only for sessions that hit.  For the same ``rng`` both paths see identical
  sessions, which the tests check.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional

import numpy as np

from .channel import NOISELESS, ChannelModel, transmit_bits
from .core import BitLengthError, BitString, RngStream
from .protocols import (
    ProtocolId,
    ProtocolParams,
    TagIdentity,
    Transcript,
    prepare_shares,
    tag_respond,
)

AGGREGATIONS = ("mode", "majority")
CANDIDATE_POLICIES = ("reset", "persist")


# --------------------------------------------------------------------------
# Attacker state
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EavesdroppedSession:
    """Read-only view of one session as the eavesdropper received it.

    ``key`` holds the session nonces the dictionary is indexed by.
    """

    key: tuple
    challenges: BitString
    responses: BitString

    def __post_init__(self):
        if self.challenges.length != self.responses.length:
            raise BitLengthError("challenge and response vectors differ in length")


@dataclass
class KeyKnowledge:
    value: BitString
    known_mask: BitString
    candidates: list = field(default_factory=list)

    @classmethod
    def empty(cls, n: int) -> "KeyKnowledge":
        return cls(BitString.zeros(n), BitString.zeros(n))

    @property
    def n(self) -> int:
        return self.value.length

    @property
    def complete(self) -> bool:
        return self.known_mask.popcount() == self.n

    def forget(self) -> None:
        self.known_mask = BitString.zeros(self.n)


def reconcile(stored, fresh, knowledge: KeyKnowledge) -> KeyKnowledge:
    """Set ``x_i = r_i xor r*_i`` wherever ``c_i != c*_i``.

    ``stored`` and ``fresh`` are ``(c, r)`` pairs of BitStrings.  Returns a new
    :class:`KeyKnowledge`; the candidate list is carried over unchanged.
    """
    (c_star, r_star), (c, r) = stored, fresh
    n = knowledge.n
    for v in (c_star, r_star, c, r):
        if v.length != n:
            raise BitLengthError(f"vector has {v.length} bits, expected {n}")
    diff = (c ^ c_star).value
    derived = (r ^ r_star).value
    value = (knowledge.value.value & ~diff) | (derived & diff)
    return KeyKnowledge(
        BitString(value, n),
        BitString(knowledge.known_mask.value | diff, n),
        list(knowledge.candidates),
    )


class SessionDictionary:
    """Nonce key -> last observed (c, r).  Only the latest meaning is kept."""

    def __init__(self):
        self._store: dict = {}

    def __len__(self) -> int:
        return len(self._store)

    def __contains__(self, key) -> bool:
        return key in self._store

    def get(self, key):
        return self._store.get(key)

    def observe(self, session: EavesdroppedSession):
        """Store the session and return the previous entry for its key, if any."""
        prev = self._store.get(session.key)
        self._store[session.key] = (session.challenges, session.responses)
        return prev


@dataclass(frozen=True)
class AttackReport:
    sessions_used: int
    recovered_key: BitString
    bits_correct: int
    success: bool
    mode: str
    oracle_assisted: bool = False
    candidates: int = 0
    bits_set: int = 0
    bits_set_correct: int = 0
    first_collision: Optional[int] = None
    capped: bool = False

    @property
    def accuracy(self) -> float:
        """Fraction of bit-setting reconciliations that wrote the true key bit."""
        return self.bits_set_correct / self.bits_set if self.bits_set else math.nan

    def to_dict(self) -> dict:
        return {
            "sessions_used": self.sessions_used,
            "recovered_key_hex": self.recovered_key.hex(),
            "bits_correct": self.bits_correct,
            "success": self.success,
            "mode": self.mode,
            "oracle_assisted": self.oracle_assisted,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class _Aggregator:
    """Most common candidate, exact-mode or per-bit majority; ties go to the newest."""

    def __init__(self, n: int, how: str):
        if how not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        self.n, self.how = n, how
        self.count = 0
        self.best: Optional[int] = None
        self._counts: Counter = Counter()
        self._best_count = 0
        self._votes = [0] * n

    def add(self, cand: int) -> int:
        self.count += 1
        if self.how == "mode":
            c = self._counts[cand] = self._counts[cand] + 1
            if c >= self._best_count:
                self.best, self._best_count = cand, c
            return self.best
        best = 0
        for i in range(self.n):
            bit = (cand >> i) & 1
            self._votes[i] += bit
            twice = 2 * self._votes[i]
            if twice > self.count or (twice == self.count and bit):
                best |= 1 << i
        self.best = best
        return best


def allowed_differences(n: int, p: float) -> int:
    """Bits the aggregated key may still get wrong when the attack stops."""
    if not 0.0 < p <= 1.0:
        raise ValueError("target fraction p must be in (0, 1]")
    return math.floor((1.0 - p) * n + 1e-9)


class _KnowledgeLoop:
    """Event-level state machine shared by the streaming and vectorised paths."""

    def __init__(self, n, x, *, noisy, p=1.0, aggregation="mode", policy="reset", max_candidates=None):
        if policy not in CANDIDATE_POLICIES:
            raise ValueError(f"candidate policy must be one of {CANDIDATE_POLICIES}")
        self.n, self.x = n, x
        self.full = (1 << n) - 1
        self.noisy = noisy
        self.allowed = allowed_differences(n, p)
        self.agg = _Aggregator(n, aggregation)
        self.policy = policy
        self.max_candidates = max_candidates
        self.value = 0
        self.known = 0
        self.bits_set = 0
        self.bits_set_correct = 0

    def event(self, diff: int, derived: int) -> bool:
        """Apply one dictionary hit; True when the attack should stop."""
        if diff:
            self.bits_set += diff.bit_count()
            self.bits_set_correct += (diff & ~(derived ^ self.x)).bit_count()
            self.value = (self.value & ~diff) | (derived & diff)
            self.known |= diff
        if self.known != self.full:
            return False
        if not self.noisy:
            return True
        best = self.agg.add(self.value)
        if (best ^ self.x).bit_count() <= self.allowed:
            return True
        if self.max_candidates is not None and self.agg.count >= self.max_candidates:
            return True
        if self.policy == "reset":
            self.known = 0
        return False

    @property
    def recovered(self) -> int:
        if self.noisy and self.agg.best is not None:
            return self.agg.best
        return self.value

    def report(self, sessions, mode, *, capped=False, first_collision=None) -> AttackReport:
        rec = self.recovered
        correct = self.n - (rec ^ self.x).bit_count()
        if self.noisy:
            success = not capped and self.agg.best is not None and self.n - correct <= self.allowed
        else:
            success = not capped and self.known == self.full
        return AttackReport(
            sessions_used=sessions,
            recovered_key=BitString(rec, self.n),
            bits_correct=correct,
            success=success,
            mode=mode,
            oracle_assisted=self.noisy,
            candidates=self.agg.count,
            bits_set=self.bits_set,
            bits_set_correct=self.bits_set_correct,
            first_collision=first_collision,
            capped=capped,
        )


class DictionaryAttack:
    """Streaming reference attack over eavesdropped session views.

    ``oracle_key`` is the true key.  It drives the stopping rule in noisy mode
    and the ``bits_correct`` score; it never feeds the key estimate.
    """

    def __init__(
        self,
        n: int,
        oracle_key: BitString,
        *,
        noisy: bool = False,
        p: float = 1.0,
        aggregation: str = "mode",
        candidate_policy: str = "reset",
        max_candidates: Optional[int] = None,
    ):
        if oracle_key.length != n:
            raise BitLengthError("oracle key length differs from n")
        self.n = n
        self.dictionary = SessionDictionary()
        self.sessions = 0
        self.first_collision: Optional[int] = None
        self.done = False
        self._loop = _KnowledgeLoop(
            n,
            oracle_key.value,
            noisy=noisy,
            p=p,
            aggregation=aggregation,
            policy=candidate_policy,
            max_candidates=max_candidates,
        )

    @property
    def knowledge(self) -> KeyKnowledge:
        loop = self._loop
        k = KeyKnowledge(BitString(loop.value, self.n), BitString(loop.known, self.n))
        k.candidates = [BitString(v, self.n) for v in loop.agg._counts.elements()] if loop.noisy else []
        return k

    def observe(self, session: EavesdroppedSession) -> bool:
        """Feed one session; returns True once the attack has stopped."""
        if self.done:
            return True
        if session.challenges.length != self.n:
            raise BitLengthError("session length differs from n")
        self.sessions += 1
        prev = self.dictionary.observe(session)
        if prev is None:
            return False
        if self.first_collision is None:
            self.first_collision = self.sessions
        diff = (prev[0] ^ session.challenges).value
        derived = (prev[1] ^ session.responses).value
        self.done = self._loop.event(diff, derived)
        return self.done

    def run(self, sessions: Iterable[EavesdroppedSession], cap: Optional[int] = None) -> AttackReport:
        for s in sessions:
            if self.observe(s) or (cap is not None and self.sessions >= cap):
                break
        return self.report()

    def report(self) -> AttackReport:
        mode = "noisy" if self._loop.noisy else "ideal"
        return self._loop.report(self.sessions, mode, capped=not self.done, first_collision=self.first_collision)


# --------------------------------------------------------------------------
# Session generation
# --------------------------------------------------------------------------


def dictionary_key_names(protocol: ProtocolId) -> tuple[str, ...]:
    """Nonces the dictionary is indexed by.

    Swiss-Knife's session key depends on N_B alone.  The Reid-style key mixes
    in both nonces, and Hitomi's shares depend on the three tag nonces.
    """
    if protocol is ProtocolId.SWISS_KNIFE:
        return ("N_B",)
    if protocol is ProtocolId.REID_SPLIT:
        return ("N_A", "N_B")
    return ("N_T1", "N_T2", "N_T3")


def block_size_for(key_bits: int) -> int:
    return int(min(8192, max(64, 1 << (math.ceil(key_bits / 2) + 2))))


@dataclass(frozen=True)
class SessionSource:
    """Honest sessions of one tag as seen by a passive eavesdropper.

    ``forward`` is the reader-to-tag link (the tag answers the challenge it
    received).  The eavesdropper has its own copies of each challenge and
    response, received over ``eavesdrop_c`` and ``eavesdrop_r``.  With
    ``active`` (Hitomi only) the adversary plays the reader and fixes N_R and
    the challenge vector.
    """

    params: ProtocolParams
    tag: TagIdentity
    forward: ChannelModel = NOISELESS
    eavesdrop_c: ChannelModel = NOISELESS
    eavesdrop_r: ChannelModel = NOISELESS
    active: bool = False

    def __post_init__(self):
        p = self.params
        if self.tag.x.length != p.n:
            raise BitLengthError("tag key length differs from n")
        if p.n > 64:
            raise ValueError("attack engine supports n <= 64")
        if self.active and p.protocol is not ProtocolId.HITOMI:
            raise ValueError("the active flag applies to Hitomi only")
        if len(self.key_names) * p.nonce_len > 64:
            raise ValueError("dictionary key wider than 64 bits; reduce nonce_bits")

    @property
    def key_names(self) -> tuple[str, ...]:
        return dictionary_key_names(self.params.protocol)

    @property
    def noiseless(self) -> bool:
        return all(ch.ber == 0.0 for ch in (self.forward, self.eavesdrop_c, self.eavesdrop_r))

    @property
    def key_bits(self) -> int:
        return len(self.key_names) * self.params.nonce_len

    @property
    def block_size(self) -> int:
        return block_size_for(self.key_bits)

    def active_constants(self, rng: RngStream) -> tuple[int, int]:
        """(N_R, c) the active adversary reuses in every session."""
        s = rng.child("active")
        return s.bits(self.params.nonce_len), s.bits(self.params.n)

    def block(self, rng: RngStream, k: int) -> dict:
        """Arrays for sessions ``k*B .. (k+1)*B - 1``; a pure function of (rng, k)."""
        p, size = self.params, self.block_size
        s = rng.child(f"block{k}")
        nb = p.nonce_len
        out = {name: s.raw(size, nb) for name in self.key_names}
        if p.protocol is ProtocolId.SWISS_KNIFE:
            out["N_A"] = s.raw(size, nb)
        elif p.protocol is ProtocolId.HITOMI:
            if self.active:
                n_r, c = self.active_constants(rng)
                out["N_R"] = np.full(size, n_r, dtype=np.uint64)
                out["c"] = np.full(size, c, dtype=np.uint64)
            else:
                out["N_R"] = s.raw(size, nb)
        if "c" not in out:
            out["c"] = s.raw(size, p.n)
        out["fwd"] = s.bernoulli_mask(size, p.n, self.forward.ber)
        out["ec"] = s.bernoulli_mask(size, p.n, self.eavesdrop_c.ber)
        out["er"] = s.bernoulli_mask(size, p.n, self.eavesdrop_r.ber)
        key = np.zeros(size, dtype=np.uint64)
        for name in self.key_names:
            key = (key << np.uint64(nb)) | out[name]
        out["key"] = key
        return out

    def views(self, rng: RngStream, count: int) -> Iterator[EavesdroppedSession]:
        """The first ``count`` sessions, evaluated one by one with the protocol code."""
        p = self.params
        emitted, k = 0, 0
        while emitted < count:
            blk = self.block(rng, k)
            for j in range(self.block_size):
                if emitted >= count:
                    return
                nonces = {
                    name: BitString(int(blk[name][j]), p.nonce_len)
                    for name in ("N_A", "N_B", "N_R", "N_T1", "N_T2", "N_T3")
                    if name in blk
                }
                shares = prepare_shares(p, self.tag, nonces)
                c = BitString(int(blk["c"][j]), p.n)
                c_tag = c ^ BitString(int(blk["fwd"][j]), p.n)
                r = BitString.from_bits(tag_respond(shares, bit, i) for i, bit in enumerate(c_tag))
                yield EavesdroppedSession(
                    tuple(nonces[name] for name in self.key_names),
                    c ^ BitString(int(blk["ec"][j]), p.n),
                    r ^ BitString(int(blk["er"][j]), p.n),
                )
                emitted += 1
            k += 1


def eavesdrop(
    transcript: Transcript,
    rng: Optional[RngStream] = None,
    channel_c: ChannelModel = NOISELESS,
    channel_r: ChannelModel = NOISELESS,
) -> EavesdroppedSession:
    """Eavesdropper's view of a finished session (copies of c and of the tag's r')."""
    c = BitString.from_bits(r.c_sent for r in transcript.rounds)
    r = BitString.from_bits(rd.r_sent for rd in transcript.rounds)
    if rng is not None:
        c = transmit_bits(c, channel_c, rng)
        r = transmit_bits(r, channel_r, rng)
    nonces = transcript.nonces
    key = tuple(nonces[name] for name in dictionary_key_names(transcript.protocol))
    return EavesdroppedSession(key, c, r)


# --------------------------------------------------------------------------
# Vectorised engine
# --------------------------------------------------------------------------


class _Sessions:
    """Concatenated block arrays, grown on demand."""

    def __init__(self, source: SessionSource, rng: RngStream):
        self.source, self.rng = source, rng
        self.blocks: list[dict] = []
        self.arrays: dict = {}
        self.size = 0

    def ensure(self, count: int) -> None:
        if count <= self.size:
            return
        while len(self.blocks) * self.source.block_size < count:
            self.blocks.append(self.source.block(self.rng, len(self.blocks)))
        names = self.blocks[0].keys()
        self.arrays = {k: np.concatenate([b[k] for b in self.blocks]) for k in names}
        self.size = len(self.blocks) * self.source.block_size


def _previous_occurrence(keys: np.ndarray) -> np.ndarray:
    """Index of the latest earlier session with the same key, or -1."""
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    same = np.flatnonzero(sk[1:] == sk[:-1])
    prev = np.full(keys.shape[0], -1, dtype=np.int64)
    prev[order[same + 1]] = order[same]
    return prev


def _responses(source: SessionSource, arr: dict, idx: np.ndarray) -> np.ndarray:
    """Tag responses r' for the sessions at ``idx`` (one PRF batch)."""
    p, tag = source.params, source.tag
    n, k = p.n, p.nonce_len
    prf = p.prf_impl
    x = tag.x.value
    c_tag = arr["c"][idx] ^ arr["fwd"][idx]
    if p.protocol is ProtocolId.HITOMI:
        a = prf.many(x, n, [(arr["N_R"][idx], k), (arr["N_T1"][idx], k), p.w], n)
        b = prf.many(a, n, [(arr["N_T2"][idx], k), (arr["N_T3"][idx], k), p.w_prime], n)
        z1 = b ^ np.uint64(x)
        return (a & ~c_tag) | (z1 & c_tag)
    if p.protocol is ProtocolId.SWISS_KNIFE:
        a = prf.many(x, n, [p.c_b, (arr["N_B"][idx], k)], n)
    else:
        a = prf.many(x, n, [tag.id, (arr["N_A"][idx], k), (arr["N_B"][idx], k)], n)
    return a ^ (np.uint64(x) & c_tag)


def _run_engine(source: SessionSource, rng: RngStream, loop: _KnowledgeLoop, mode: str, cap: Optional[int]):
    sessions = _Sessions(source, rng)
    done, target, first = 0, source.block_size, None
    reuse_a = source.params.protocol is not ProtocolId.HITOMI
    while True:
        if cap is not None:
            target = min(target, cap)
        sessions.ensure(target)
        arr = sessions.arrays
        prev = _previous_occurrence(arr["key"][:target])
        ev = done + np.flatnonzero(prev[done:target] >= 0)
        if ev.size:
            pv = prev[ev]
            if first is None:
                first = int(ev[0]) + 1
            if reuse_a:
                # same nonce key => same session key a; one PRF batch serves both
                r_now = _responses(source, arr, ev)
                x = np.uint64(source.tag.x.value)
                c_prev_tag = arr["c"][pv] ^ arr["fwd"][pv]
                c_now_tag = arr["c"][ev] ^ arr["fwd"][ev]
                a = r_now ^ (x & c_now_tag)
                r_prev = a ^ (x & c_prev_tag)
            else:
                r_now = _responses(source, arr, ev)
                r_prev = _responses(source, arr, pv)
            diffs = ((arr["c"][ev] ^ arr["ec"][ev]) ^ (arr["c"][pv] ^ arr["ec"][pv])).tolist()
            derived = ((r_now ^ arr["er"][ev]) ^ (r_prev ^ arr["er"][pv])).tolist()
            for j, d, r in zip(ev.tolist(), diffs, derived):
                if loop.event(d, r):
                    return loop.report(j + 1, mode, first_collision=first)
        done = target
        if cap is not None and done >= cap:
            return loop.report(cap, mode, capped=True, first_collision=first)
        target *= 2


def default_session_cap(n: int) -> int:
    return 1 << (n // 2 + 8)


def dictionary_attack_ideal(
    session_source: SessionSource,
    n: int,
    rng: RngStream,
    cap: Optional[int] = None,
) -> AttackReport:
    """Noiseless-channel attack: stop as soon as every key bit is known.

    The recovered key is checked against the true key and a mismatch raises
    ``AssertionError`` (ideal-mode soundness).
    """
    if session_source.params.n != n:
        raise ValueError("n differs from the session source's n")
    if not session_source.noiseless:
        raise ValueError("ideal mode needs noiseless channels; use dictionary_attack_noisy")
    if session_source.params.protocol is ProtocolId.HITOMI:
        raise ValueError("use attack_hitomi for Hitomi sessions")
    loop = _KnowledgeLoop(n, session_source.tag.x.value, noisy=False)
    report = _run_engine(session_source, rng, loop, "ideal", cap)
    if report.success and report.recovered_key != session_source.tag.x:
        raise AssertionError("ideal-mode attack recovered a wrong key")
    return report


def dictionary_attack_noisy(
    n: int,
    fwd: ChannelModel,
    bwd: ChannelModel,
    p: float,
    oracle_key: BitString,
    rng: RngStream,
    *,
    params: Optional[ProtocolParams] = None,
    tag_id: Optional[BitString] = None,
    aggregation: str = "mode",
    candidate_policy: str = "reset",
    session_cap: Optional[int] = None,
    max_candidates: Optional[int] = None,
) -> AttackReport:
    """Noisy-channel attack with a key-candidate list and an oracle stopping rule.

    The tag answers the challenge it received over ``fwd``.  The eavesdropper
    receives its own copy of each challenge at ``fwd``'s rate and of each
    response at ``bwd``'s rate.  Every time all n bits are known, the current
    key becomes a candidate.  The attack stops once the most common candidate
    is within ``floor((1-p) n)`` bits of ``oracle_key``.

    ``candidate_policy="reset"`` forgets per-bit knowledge after each
    candidate so candidates are built from fresh hits; ``"persist"`` keeps it,
    so every later hit yields a new candidate.  ``max_candidates=1`` gives the
    first-candidate success test.  Reaching ``session_cap`` (default
    ``2**(n//2 + 8)``) returns a report with ``success=False`` and ``capped``.
    """
    if oracle_key.length != n:
        raise BitLengthError("oracle key length differs from n")
    params = params or ProtocolParams(ProtocolId.SWISS_KNIFE, n)
    if params.n != n:
        raise ValueError("n differs from params.n")
    if params.protocol is ProtocolId.HITOMI:
        raise ValueError("use attack_hitomi for Hitomi sessions")
    tag = TagIdentity(tag_id if tag_id is not None else BitString.zeros(32), oracle_key)
    source = SessionSource(params, tag, forward=fwd, eavesdrop_c=fwd, eavesdrop_r=bwd)
    loop = _KnowledgeLoop(
        n, oracle_key.value, noisy=True, p=p, aggregation=aggregation, policy=candidate_policy,
        max_candidates=max_candidates,
    )
    cap = default_session_cap(n) if session_cap is None else session_cap
    return _run_engine(source, rng, loop, "noisy", cap)


def attack_hitomi(
    session_source: SessionSource,
    n: int,
    rng: RngStream,
    session_cap: int = 10**6,
) -> AttackReport:
    """Apply the Swiss-Knife reconciliation to Hitomi sessions.

    Since ``Z^0 xor Z^1 = a xor b xor x``, reconciled bits are unrelated to
    the key.  The attack stops at the first complete key (which is then
    compared to the true key) or at the cap.  ``accuracy`` on the report is
    the fraction of reconciled bits that matched the key.
    """
    if session_source.params.protocol is not ProtocolId.HITOMI:
        raise ValueError("attack_hitomi needs a Hitomi session source")
    if session_source.params.n != n:
        raise ValueError("n differs from the session source's n")
    loop = _KnowledgeLoop(n, session_source.tag.x.value, noisy=False)
    rep = _run_engine(session_source, rng, loop, "hitomi", session_cap)
    if rep.success and rep.recovered_key != session_source.tag.x:
        rep = replace(rep, success=False)
    return rep


def sessions_to_first_collision(session_source: SessionSource, rng: RngStream, cap: int = 1 << 40) -> int:
    """Sessions until two share the dictionary key (no PRF work involved)."""
    sessions = _Sessions(session_source, rng)
    target = session_source.block_size
    while target <= cap:
        sessions.ensure(target)
        prev = _previous_occurrence(sessions.arrays["key"][:target])
        hits = np.flatnonzero(prev >= 0)
        if hits.size:
            return int(hits[0]) + 1
        target *= 2
    raise RuntimeError("no collision within the cap")


def birthday_sessions(n: int, p: float) -> float:
    """Sessions after which a triple-nonce collision has occurred with probability p."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    if n < 1:
        raise ValueError("n must be at least 1")
    return 2.0 ** (1.5 * n) * math.sqrt(2.0 * math.log(1.0 / (1.0 - p)))
