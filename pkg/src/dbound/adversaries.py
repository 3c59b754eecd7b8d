"""Round-level fraud strategies: distance, mafia and terrorist fraud.

Each strategy is an *actor* for :func:`dbound.protocols.run_session`: it
builds a prover that stands in for the tag during the rapid bit exchange.
:func:`simulate_fraud` estimates a strategy's success probability either by
running full sessions (``engine="scalar"``) or with a numpy model of the same
rounds over whole batches of trials (``engine="vector"``, the default).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import LinkPair
from .core import BitString, RngStream
from .protocols import (
    HonestProver,
    ProtocolId,
    ProtocolParams,
    ReaderDatabase,
    TagIdentity,
    Verdict,
    run_session,
)

VECTOR_CHUNK = 1 << 14
Z95 = 1.959963984540054


class FraudKind(str, enum.Enum):
    DISTANCE = "distance"
    MAFIA = "mafia"
    TERRORIST = "terrorist"


# --------------------------------------------------------------------------
# Provers
# --------------------------------------------------------------------------


class DistanceFraudProver(HonestProver):
    """Legitimate but distant tag: commits a uniform bit before c_i arrives."""

    def respond(self, i: int, c: int) -> tuple[int, float]:
        r = self.rng.bit()
        self.c_prime[i] = c
        self.r_prime[i] = r
        return r, self.latency


class MafiaRelayProver:
    """Man in the middle next to the reader, relaying to a distant honest tag.

    Before each challenge it sends a guessed challenge to the tag and keeps
    the answer.  If the guess matches the reader's challenge the stored bit is
    relayed at once; otherwise it either guesses a bit (``on_miss="guess"``)
    or forwards the real challenge and waits (``"wait"``), which costs
    ``relay_delay`` on top of the honest latency.
    """

    def __init__(self, params, tag, rng: RngStream, relay_delay: float, on_miss: str):
        self.params = params
        self.rng = rng
        self.tag_side = HonestProver(params, tag, rng.child("tag"))
        self.relay_delay = relay_delay
        self.on_miss = on_miss
        self.latency = params.honest_latency
        self.misses: list[int] = []  # rounds where the early guess was wrong

    def start(self, reader_nonces):
        return self.tag_side.start(reader_nonces)

    def respond(self, i: int, c: int) -> tuple[int, float]:
        guess = self.rng.bit()
        early, _ = self.tag_side.respond(i, guess)
        if guess == c:
            return early, self.latency
        self.misses.append(i)
        if self.on_miss == "wait":
            r, _ = self.tag_side.respond(i, c)
            return r, self.latency + self.relay_delay
        return self.rng.bit(), self.latency

    def finish(self):
        return self.tag_side.finish()

    def check_reader_tag(self, t_a) -> bool:
        return self.tag_side.check_reader_tag(t_a)


class TerroristAccompliceProver(HonestProver):
    """Accomplice holding one full share and some key bits from a dishonest tag.

    The dishonest tag runs the untimed phases itself (it computes t_B over
    whatever the accomplice reports), so only the rapid rounds are at stake.
    Where the share relation ``Z^1 = Z^0 xor x`` holds, a known key bit also
    gives the other share's bit.
    """

    def __init__(self, params, tag, rng, revealed_share: int, known_mask: BitString):
        super().__init__(params, tag, rng)
        self.revealed_share = revealed_share
        self.known_mask = known_mask

    def respond(self, i: int, c: int) -> tuple[int, float]:
        revealed = self.shares.share(self.revealed_share)
        if c == self.revealed_share:
            r = revealed[i]
        elif self.known_mask[i] and self.params.protocol is not ProtocolId.HITOMI:
            r = revealed[i] ^ self.tag.x[i]
        else:
            r = self.rng.bit()
        self.c_prime[i] = c
        self.r_prime[i] = r
        return r, self.latency


# --------------------------------------------------------------------------
# Strategy descriptions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FraudStrategy:
    kind: FraudKind
    revealed_share: int = 0
    known_key_bits: Optional[BitString] = None
    relay_delay: Optional[float] = None
    on_miss: str = "guess"

    def __post_init__(self):
        object.__setattr__(self, "kind", FraudKind(self.kind))
        if self.revealed_share not in (0, 1):
            raise ValueError("revealed_share must be 0 (Z0) or 1 (Z1)")
        if self.on_miss not in ("guess", "wait"):
            raise ValueError("on_miss must be 'guess' or 'wait'")

    def unknown_bits(self, n: int) -> int:
        """v: key bits the accomplice does not know."""
        if self.known_key_bits is None:
            return n
        return n - self.known_key_bits.popcount()

    def _mask(self, n: int) -> BitString:
        mask = self.known_key_bits if self.known_key_bits is not None else BitString.zeros(n)
        if mask.length != n:
            raise ValueError(f"known_key_bits has {mask.length} bits, expected {n}")
        return mask

    def _relay_delay(self, params: ProtocolParams) -> float:
        delay = 2.0 * params.t_max if self.relay_delay is None else self.relay_delay
        if params.honest_latency + delay <= params.t_max:
            raise ValueError("a relayed round must exceed t_max; increase relay_delay")
        return delay

    def prover(self, params: ProtocolParams, tag: TagIdentity, rng: RngStream):
        if self.kind is FraudKind.DISTANCE:
            return DistanceFraudProver(params, tag, rng)
        if self.kind is FraudKind.MAFIA:
            return MafiaRelayProver(params, tag, rng, self._relay_delay(params), self.on_miss)
        return TerroristAccompliceProver(params, tag, rng, self.revealed_share, self._mask(params.n))


def distance_fraud() -> FraudStrategy:
    return FraudStrategy(FraudKind.DISTANCE)


def mafia_early_challenge(relay_delay: Optional[float] = None, on_miss: str = "guess") -> FraudStrategy:
    return FraudStrategy(FraudKind.MAFIA, relay_delay=relay_delay, on_miss=on_miss)


def terrorist_split_reveal(revealed_share: int = 0, known_key_bits: Optional[BitString] = None) -> FraudStrategy:
    return FraudStrategy(FraudKind.TERRORIST, revealed_share=revealed_share, known_key_bits=known_key_bits)


def known_bits_mask(n: int, v: int) -> BitString:
    """Mask revealing the first ``n - v`` key bits."""
    if not 0 <= v <= n:
        raise ValueError("v must be in 0..n")
    return BitString(((1 << (n - v)) - 1) << v, n)


# --------------------------------------------------------------------------
# Single sessions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FraudOutcome:
    accepted: bool
    verdict: Verdict
    rounds_correct: int


def _outcome(params: ProtocolParams, transcript) -> FraudOutcome:
    v = transcript.verdict
    correct = params.n - v.err_c - v.err_r if v.lookup_ok else 0
    return FraudOutcome(v.accepted, v, correct)


def _run(strategy, params, tag, db, rng, links: Optional[LinkPair]):
    links = links or LinkPair()
    t = run_session(params, tag, db, links.forward, links.backward, actor=strategy, rng=rng)
    return _outcome(params, t)


def distance_fraud_session(params, tag, db, rng, links=None) -> FraudOutcome:
    return _run(distance_fraud(), params, tag, db, rng, links)


def mafia_early_challenge_session(params, honest_tag, db, relay_delay=None, rng=None, on_miss="guess", links=None):
    strategy = mafia_early_challenge(relay_delay, on_miss)
    return _run(strategy, params, honest_tag, db, rng or RngStream(0, "mafia"), links)


def terrorist_fraud_session(params, strategy: FraudStrategy, tag, db, rng, links=None) -> FraudOutcome:
    if strategy.kind is not FraudKind.TERRORIST:
        raise ValueError("terrorist_fraud_session needs a terrorist strategy")
    return _run(strategy, params, tag, db, rng, links)


# --------------------------------------------------------------------------
# Monte Carlo estimation
# --------------------------------------------------------------------------


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return lo, hi


@dataclass(frozen=True)
class FraudEstimate:
    successes: int
    trials: int
    p_hat: float
    ci_low: float
    ci_high: float
    stderr: float
    mean_rounds_correct: float

    @classmethod
    def from_counts(cls, successes: int, trials: int, rounds_correct_sum: int = 0) -> "FraudEstimate":
        p = successes / trials
        lo, hi = wilson_interval(successes, trials)
        return cls(successes, trials, p, lo, hi, math.sqrt(p * (1 - p) / trials), rounds_correct_sum / trials)


def theorem_bound(strategy: FraudStrategy, params: ProtocolParams) -> float:
    """Success bound the matching theorem states for this strategy/protocol."""
    n = params.n
    if strategy.kind is FraudKind.DISTANCE:
        return 0.5**n
    if strategy.kind is FraudKind.MAFIA:
        return 0.75**n if params.protocol is ProtocolId.REID_SPLIT else 0.5**n
    return 0.75 ** strategy.unknown_bits(n)


def _popcount(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a).astype(np.int64)


def _batch_shares(params: ProtocolParams, rng: RngStream, size: int):
    """Random tag keys and honest session shares for ``size`` trials."""
    n, k = params.n, params.nonce_len
    prf = params.prf_impl
    x = rng.raw(size, n)
    if params.protocol is ProtocolId.SWISS_KNIFE:
        a = prf.many(x, n, [params.c_b, (rng.raw(size, k), k)], n)
        return x, a, a ^ x
    if params.protocol is ProtocolId.HITOMI:
        n_r, t1, t2, t3 = (rng.raw(size, k) for _ in range(4))
        a = prf.many(x, n, [(n_r, k), (t1, k), params.w], n)
        b = prf.many(a, n, [(t2, k), (t3, k), params.w_prime], n)
        return x, a, b ^ x
    ids = rng.raw(size, 32)
    a = prf.many(x, n, [(ids, 32), (rng.raw(size, k), k), (rng.raw(size, k), k)], n)
    return x, a, a ^ x


def simulate_chunk(
    strategy: FraudStrategy,
    params: ProtocolParams,
    size: int,
    rng: RngStream,
    links: Optional[LinkPair] = None,
) -> tuple[int, int]:
    """Vectorised trials; returns ``(successes, sum of rounds_correct)``."""
    n = params.n
    if n > 64:
        raise ValueError("the vector engine supports n <= 64; use engine='scalar'")
    links = links or LinkPair()
    full = np.uint64((1 << n) - 1)
    x, z0, z1 = _batch_shares(params, rng.child("shares"), size)

    def share_at(c):
        return ((z0 & ~c) | (z1 & c)) & full

    c = rng.raw(size, n)
    fwd = rng.bernoulli_mask(size, n, links.forward.ber)
    bwd = rng.bernoulli_mask(size, n, links.backward.ber)
    c_near = c ^ fwd  # challenge as received next to the reader
    coins = rng.raw(size, n)
    late = np.zeros(size, dtype=np.uint64)

    if strategy.kind is FraudKind.DISTANCE:
        echo = c_near
        resp = coins
    elif strategy.kind is FraudKind.MAFIA:
        guess = rng.raw(size, n)
        hit = ~(guess ^ c_near) & full
        early = share_at(guess)
        if strategy.on_miss == "wait":
            strategy._relay_delay(params)
            resp = (early & hit) | (share_at(c_near) & ~hit & full)
            echo = (guess & hit) | (c_near & ~hit & full)
            late = ~hit & full
        else:
            resp = (early & hit) | (coins & ~hit & full)
            echo = guess
    else:
        mask = np.uint64(strategy._mask(n).value)
        if params.protocol is ProtocolId.HITOMI:
            mask = np.uint64(0)
        revealed, other = (z1, z0) if strategy.revealed_share else (z0, z1)
        sel = (c_near if strategy.revealed_share else ~c_near) & full
        resp = (revealed & sel) | (other & ~sel & mask) | (coins & ~sel & ~mask & full)
        echo = c_near

    if params.protocol is ProtocolId.REID_SPLIT:
        echo = c  # no echo: the reader assumes c' = c
    r_recv = resp ^ bwd
    same = ~(c ^ echo) & full
    err_c = _popcount(c ^ echo)
    err_r = _popcount(same & (r_recv ^ share_at(c)))
    err_t = _popcount(same & late)
    accepted = (err_c + err_r + err_t) < params.tau
    return int(accepted.sum()), int((n - err_c - err_r).sum())


def simulate_fraud(
    strategy: FraudStrategy,
    params: ProtocolParams,
    trials: int,
    rng: RngStream,
    engine: str = "vector",
    links: Optional[LinkPair] = None,
) -> FraudEstimate:
    """Success probability with a 95% Wilson interval.

    Every trial uses a fresh random tag.  The vector engine splits trials into
    fixed chunks of ``VECTOR_CHUNK`` with one substream each, so the result
    depends only on ``(rng, strategy, params, trials)``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    successes = correct = 0
    if engine == "vector":
        for k, start in enumerate(range(0, trials, VECTOR_CHUNK)):
            size = min(VECTOR_CHUNK, trials - start)
            s, rc = simulate_chunk(strategy, params, size, rng.child(f"chunk{k}"), links)
            successes += s
            correct += rc
    elif engine == "scalar":
        for t in range(trials):
            trial = rng.child(f"trial{t}")
            tag = TagIdentity.random(trial.child("tag"), params.n)
            out = _run(strategy, params, tag, ReaderDatabase([tag]), trial.child("session"), links)
            successes += out.accepted
            correct += out.rounds_correct
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return FraudEstimate.from_counts(successes, trials, correct)
