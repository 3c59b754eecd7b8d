"""Swiss-Knife, Hitomi and a Reid-style split-key protocol as runnable sessions.

A session is driven by :func:`run_session`.  The reader side lives in this
module; the tag side is any *prover* object with the four methods below,
which lets honest tags and the fraud strategies in :mod:`dbound.adversaries`
share one driver::

    prover.start(reader_nonces) -> dict of tag nonces (and a clear ID for Reid)
    prover.respond(i, c_received) -> (response_bit, latency)
    prover.finish() -> FinalMessage
    prover.check_reader_tag(t_a) -> bool
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Union

from .channel import NOISELESS, ChannelModel, transmit_bit
from .core import (
    BitLengthError,
    BitString,
    Prf,
    PrfInputs,
    RngStream,
    get_prf,
    random_bits,
    xor,
)


class ProtocolId(str, enum.Enum):
    SWISS_KNIFE = "swiss-knife"
    HITOMI = "hitomi"
    REID_SPLIT = "reid-split"

    @classmethod
    def parse(cls, value: Union[str, "ProtocolId"]) -> "ProtocolId":
        if isinstance(value, cls):
            return value
        normalized = str(value).lower().replace("_", "-")
        aliases = {"swissknife": "swiss-knife", "reid": "reid-split", "reidsplit": "reid-split"}
        return cls(aliases.get(normalized, normalized))


DEFAULT_CB = BitString.from_bytes(b"SWISS-KNIFE-CB".ljust(16, b"\x00"))


@dataclass(frozen=True)
class ProtocolParams:
    """Session parameters shared by reader and tag.

    ``tau`` may be ``n + 1``, which disables rejection on error counts.
    ``nonce_bits`` and ``tag_bits`` default to ``n``.
    """

    protocol: ProtocolId
    n: int
    tau: int = 1
    t_max: float = 1.0
    honest_latency: float = 0.5
    c_b: BitString = DEFAULT_CB
    w: bytes = b""
    w_prime: bytes = b""
    nonce_bits: Optional[int] = None
    tag_bits: Optional[int] = None
    prf: Union[str, Prf] = "hmac-sha256"

    def __post_init__(self):
        object.__setattr__(self, "protocol", ProtocolId.parse(self.protocol))
        if not 1 <= self.n <= 256:
            raise ValueError(f"n must be in 1..256, got {self.n}")
        if not 0 <= self.tau <= self.n + 1:
            raise ValueError(f"tau must be in 0..n+1, got {self.tau}")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.honest_latency < 0:
            raise ValueError("honest_latency must be non-negative")
        for name in ("nonce_bits", "tag_bits"):
            v = getattr(self, name)
            if v is not None and not 1 <= v <= 256:
                raise ValueError(f"{name} must be in 1..256")
        get_prf(self.prf)

    @property
    def nonce_len(self) -> int:
        return self.nonce_bits or self.n

    @property
    def tag_len(self) -> int:
        return self.tag_bits or self.n

    @property
    def prf_impl(self) -> Prf:
        return get_prf(self.prf)


@dataclass(frozen=True)
class TagIdentity:
    id: BitString
    x: BitString

    @classmethod
    def random(cls, rng: RngStream, n: int, id_bits: int = 32) -> "TagIdentity":
        return cls(random_bits(rng, id_bits), random_bits(rng, n))


class ReaderDatabase:
    """Immutable collection of enrolled tags with unique ids."""

    def __init__(self, tags=()):
        self._tags = tuple(tags)
        ids = [t.id for t in self._tags]
        if len(set(ids)) != len(ids):
            raise ValueError("tag ids in a reader database must be unique")
        self._by_id = {t.id: t for t in self._tags}

    def __iter__(self):
        return iter(self._tags)

    def __len__(self) -> int:
        return len(self._tags)

    def __contains__(self, tag: TagIdentity) -> bool:
        return self._by_id.get(tag.id) == tag

    def by_id(self, tag_id: BitString) -> Optional[TagIdentity]:
        return self._by_id.get(tag_id)

    @classmethod
    def random(cls, rng: RngStream, count: int, n: int, id_bits: int = 32) -> "ReaderDatabase":
        tags = {}
        while len(tags) < count:
            t = TagIdentity.random(rng, n, id_bits)
            tags.setdefault(t.id, t)
        return cls(tags.values())


@dataclass(frozen=True)
class KeyShares:
    z0: BitString
    z1: BitString
    a: BitString
    b: Optional[BitString] = None

    def share(self, c: int) -> BitString:
        return self.z1 if c else self.z0


@dataclass(frozen=True)
class RoundRecord:
    c_sent: int
    c_received: int
    r_sent: int
    r_received: int
    latency: float


@dataclass(frozen=True)
class FinalMessage:
    """Untimed tag-to-reader message after the rapid bit exchange.

    ``echo`` is the c' vector (Swiss-Knife) or m = c'||r' (Hitomi).  Reid
    sends no final tag; its identifier travels in the clear at the start.
    """

    t_b: Optional[BitString] = None
    echo: Optional[BitString] = None


@dataclass(frozen=True)
class Verdict:
    err_c: int
    err_r: int
    err_t: int
    accepted: bool
    lookup_ok: bool = True
    reader_auth_ok: bool = False
    tag_id: Optional[BitString] = None

    @property
    def total_errors(self) -> int:
        return self.err_c + self.err_r + self.err_t


@dataclass(frozen=True)
class Transcript:
    """Both endpoints' record of one session.

    ``reader_nonces`` are what the reader generated and ``tag_nonces`` are
    the tag's nonces (and Reid's clear ID) as the reader received them.
    """

    protocol: ProtocolId
    n: int
    reader_nonces: Mapping[str, BitString]
    tag_nonces: Mapping[str, BitString]
    rounds: tuple[RoundRecord, ...]
    final: FinalMessage = field(default_factory=FinalMessage)
    t_a: Optional[BitString] = None
    verdict: Optional[Verdict] = None

    @property
    def nonces(self) -> dict[str, BitString]:
        return {**self.reader_nonces, **self.tag_nonces}

    @property
    def challenges(self) -> BitString:
        return BitString.from_bits(r.c_sent for r in self.rounds)

    @property
    def responses(self) -> BitString:
        return BitString.from_bits(r.r_received for r in self.rounds)

    @property
    def m(self) -> Optional[BitString]:
        return self.final.echo if self.protocol is ProtocolId.HITOMI else None

    def to_dict(self) -> dict:
        def bs(v):
            return None if v is None else str(v)

        out = {
            "protocol": self.protocol.value,
            "n": self.n,
            "nonces": {k: str(v) for k, v in sorted(self.nonces.items())},
            "rounds": [
                {"c": r.c_sent, "c_recv": r.c_received, "r": r.r_sent, "r_recv": r.r_received, "latency": r.latency}
                for r in self.rounds
            ],
            "t_b": bs(self.final.t_b),
            "echo": bs(self.final.echo),
            "t_a": bs(self.t_a),
        }
        if self.verdict is not None:
            v = self.verdict
            out["verdict"] = {
                "err_c": v.err_c,
                "err_r": v.err_r,
                "err_t": v.err_t,
                "accepted": v.accepted,
                "lookup_ok": v.lookup_ok,
                "reader_auth_ok": v.reader_auth_ok,
            }
        return out


# --------------------------------------------------------------------------
# Key derivation and tags
# --------------------------------------------------------------------------


def _check_len(name: str, v: BitString, n: int) -> None:
    if v.length != n:
        raise BitLengthError(f"{name} has {v.length} bits, expected {n}")


def swiss_knife_prepare(x: BitString, n_b: BitString, params: ProtocolParams) -> KeyShares:
    _check_len("x", x, params.n)
    _check_len("N_B", n_b, params.nonce_len)
    a = params.prf_impl(x, PrfInputs.of(params.c_b, n_b), params.n)
    return KeyShares(z0=a, z1=xor(a, x), a=a)


def hitomi_prepare(
    x: BitString,
    n_r: BitString,
    n_t1: BitString,
    n_t2: BitString,
    n_t3: BitString,
    params: ProtocolParams,
) -> KeyShares:
    _check_len("x", x, params.n)
    for name, v in (("N_R", n_r), ("N_T1", n_t1), ("N_T2", n_t2), ("N_T3", n_t3)):
        _check_len(name, v, params.nonce_len)
    prf = params.prf_impl
    a = prf(x, PrfInputs.of(n_r, n_t1, params.w), params.n)
    b = prf(a, PrfInputs.of(n_t2, n_t3, params.w_prime), params.n)
    return KeyShares(z0=a, z1=xor(b, x), a=a, b=b)


def reid_prepare(x: BitString, tag_id: BitString, n_a: BitString, n_b: BitString, params: ProtocolParams) -> KeyShares:
    _check_len("x", x, params.n)
    a = params.prf_impl(x, PrfInputs.of(tag_id, n_a, n_b), params.n)
    return KeyShares(z0=a, z1=xor(a, x), a=a)


def prepare_shares(params: ProtocolParams, tag: TagIdentity, nonces: Mapping[str, BitString]) -> KeyShares:
    try:
        if params.protocol is ProtocolId.SWISS_KNIFE:
            return swiss_knife_prepare(tag.x, nonces["N_B"], params)
        if params.protocol is ProtocolId.HITOMI:
            return hitomi_prepare(tag.x, nonces["N_R"], nonces["N_T1"], nonces["N_T2"], nonces["N_T3"], params)
        return reid_prepare(tag.x, tag.id, nonces["N_A"], nonces["N_B"], params)
    except KeyError as exc:
        raise ValueError(f"missing nonce {exc.args[0]} for {params.protocol.value}") from None


def tag_respond(shares: KeyShares, c_prime: int, i: int) -> int:
    n = shares.z0.length
    if not 0 <= i < n:
        raise IndexError(f"round index {i} out of range for n={n}")
    if c_prime not in (0, 1):
        raise ValueError("challenge must be 0 or 1")
    return shares.share(c_prime)[i]


def compute_final_tag(
    protocol,
    x: BitString,
    tag_id: BitString,
    echo: BitString,
    nonces: Mapping[str, BitString],
    params: ProtocolParams,
) -> BitString:
    """t_B over the protocol's argument tuple.

    ``echo`` is the c' vector for Swiss-Knife and m = c'||r' for Hitomi.
    """
    protocol = ProtocolId.parse(protocol)
    if echo is None or tag_id is None:
        raise ValueError("final tag needs the tag id and the echoed challenge data")
    try:
        if protocol is ProtocolId.SWISS_KNIFE:
            _check_len("c'", echo, params.n)
            inputs = PrfInputs.of(echo, tag_id, nonces["N_A"], nonces["N_B"])
        elif protocol is ProtocolId.HITOMI:
            _check_len("m", echo, 2 * params.n)
            inputs = PrfInputs.of(echo, tag_id, nonces["N_R"], nonces["N_T1"], nonces["N_T2"], nonces["N_T3"])
        else:
            raise ValueError("the Reid-style protocol has no final tag")
    except KeyError as exc:
        raise ValueError(f"missing nonce {exc.args[0]} for {protocol.value}") from None
    return params.prf_impl(x, inputs, params.tag_len)


def compute_reader_tag(
    protocol,
    x: BitString,
    nonces: Mapping[str, BitString],
    b: Optional[BitString],
    params: ProtocolParams,
) -> BitString:
    protocol = ProtocolId.parse(protocol)
    try:
        if protocol is ProtocolId.SWISS_KNIFE:
            inputs = PrfInputs.of(nonces["N_B"])
        elif protocol is ProtocolId.HITOMI:
            if b is None:
                raise ValueError("Hitomi reader tag needs the temporary key b")
            inputs = PrfInputs.of(nonces["N_R"], b)
        else:
            inputs = PrfInputs.of(nonces["N_A"], nonces["N_B"])
    except KeyError as exc:
        raise ValueError(f"missing nonce {exc.args[0]} for {protocol.value}") from None
    return params.prf_impl(x, inputs, params.tag_len)


# --------------------------------------------------------------------------
# Honest tag
# --------------------------------------------------------------------------


def draw_tag_nonces(params: ProtocolParams, tag: TagIdentity, rng: RngStream) -> dict[str, BitString]:
    k = params.nonce_len
    if params.protocol is ProtocolId.HITOMI:
        return {name: random_bits(rng, k) for name in ("N_T1", "N_T2", "N_T3")}
    nonces = {"N_B": random_bits(rng, k)}
    if params.protocol is ProtocolId.REID_SPLIT:
        nonces["ID"] = tag.id
    return nonces


class HonestProver:
    """Tag that follows the protocol; records c' and r' for the final phase."""

    def __init__(self, params: ProtocolParams, tag: TagIdentity, rng: RngStream, latency: Optional[float] = None):
        self.params = params
        self.tag = tag
        self.rng = rng
        self.latency = params.honest_latency if latency is None else latency
        self.nonces: dict[str, BitString] = {}
        self.shares: Optional[KeyShares] = None
        self.c_prime = [0] * params.n
        self.r_prime = [0] * params.n

    def start(self, reader_nonces: Mapping[str, BitString]) -> dict[str, BitString]:
        own = draw_tag_nonces(self.params, self.tag, self.rng)
        self.nonces = {**reader_nonces, **own}
        self.shares = prepare_shares(self.params, self.tag, self.nonces)
        return own

    def respond(self, i: int, c: int) -> tuple[int, float]:
        r = tag_respond(self.shares, c, i)
        self.c_prime[i] = c
        self.r_prime[i] = r
        return r, self.latency

    def finish(self) -> FinalMessage:
        p = self.params
        if p.protocol is ProtocolId.REID_SPLIT:
            return FinalMessage()
        echo = BitString.from_bits(self.c_prime)
        if p.protocol is ProtocolId.HITOMI:
            echo = echo + BitString.from_bits(self.r_prime)
        return FinalMessage(compute_final_tag(p.protocol, self.tag.x, self.tag.id, echo, self.nonces, p), echo)

    def check_reader_tag(self, t_a: BitString) -> bool:
        expected = compute_reader_tag(self.params.protocol, self.tag.x, self.nonces, self.shares.b, self.params)
        return t_a == expected


@dataclass(frozen=True)
class HonestTag:
    """Actor for an honest, in-range tag.  ``latency`` overrides the params."""

    latency: Optional[float] = None

    def prover(self, params: ProtocolParams, tag: TagIdentity, rng: RngStream) -> HonestProver:
        return HonestProver(params, tag, rng, self.latency)


# --------------------------------------------------------------------------
# Reader
# --------------------------------------------------------------------------


def draw_reader_nonces(params: ProtocolParams, rng: RngStream) -> dict[str, BitString]:
    name = "N_R" if params.protocol is ProtocolId.HITOMI else "N_A"
    return {name: random_bits(rng, params.nonce_len)}


def _lookup(view: Transcript, db: ReaderDatabase, params: ProtocolParams) -> Optional[TagIdentity]:
    nonces = view.nonces
    if params.protocol is ProtocolId.REID_SPLIT:
        claimed = nonces.get("ID")
        return None if claimed is None else db.by_id(claimed)
    final = view.final
    if final.t_b is None or final.echo is None:
        return None
    expected_echo = params.n if params.protocol is ProtocolId.SWISS_KNIFE else 2 * params.n
    if final.echo.length != expected_echo:
        return None
    for tag in db:
        if compute_final_tag(params.protocol, tag.x, tag.id, final.echo, nonces, params) == final.t_b:
            return tag
    return None


def verify(reader_view: Transcript, db: ReaderDatabase, params: ProtocolParams) -> Verdict:
    """Reader-side decision.  Uses only what the reader sent or received."""
    tag = _lookup(reader_view, db, params)
    if tag is None:
        return Verdict(0, 0, 0, accepted=False, lookup_ok=False)
    shares = prepare_shares(params, tag, reader_view.nonces)
    if params.protocol is ProtocolId.REID_SPLIT:
        # no echo of c': the reader can only assume c' = c
        echoed = [r.c_sent for r in reader_view.rounds]
    else:
        echoed = list(reader_view.final.echo.slice(0, params.n))
    err_c = err_r = err_t = 0
    for i, rnd in enumerate(reader_view.rounds):
        if rnd.c_sent != echoed[i]:
            err_c += 1
            continue
        if rnd.r_received != shares.share(rnd.c_sent)[i]:
            err_r += 1
        if rnd.latency > params.t_max:
            err_t += 1
    accepted = err_c + err_r + err_t < params.tau
    return Verdict(err_c, err_r, err_t, accepted=accepted, lookup_ok=True, tag_id=tag.id)


def run_session(
    params: ProtocolParams,
    tag: TagIdentity,
    db: ReaderDatabase,
    fwd: ChannelModel = NOISELESS,
    bwd: ChannelModel = NOISELESS,
    actor=None,
    rng: Optional[RngStream] = None,
) -> Transcript:
    """One full session: preparation, n timed rounds, final phase, verdict.

    ``actor`` is :class:`HonestTag` (default) or any object with a
    ``prover(params, tag, rng)`` factory, such as a fraud strategy.  Only the
    rapid bit exchange crosses the noisy channels; the other messages use a
    reliable link.
    """
    if rng is None:
        rng = RngStream(0, "session")
    actor = HonestTag() if actor is None else actor
    prover = actor.prover(params, tag, rng.child("prover"))
    reader_rng = rng.child("reader")
    chan_rng = rng.child("channel")

    reader_nonces = draw_reader_nonces(params, reader_rng)
    tag_nonces = prover.start(dict(reader_nonces))
    challenges = random_bits(reader_rng, params.n)

    rounds = []
    for i, c in enumerate(challenges):
        c_recv = transmit_bit(c, fwd, chan_rng)
        r_sent, latency = prover.respond(i, c_recv)
        r_recv = transmit_bit(r_sent, bwd, chan_rng)
        rounds.append(RoundRecord(c, c_recv, r_sent, r_recv, latency))

    final = prover.finish()
    view = Transcript(params.protocol, params.n, dict(reader_nonces), dict(tag_nonces), tuple(rounds), final)
    verdict = verify(view, db, params)
    t_a = None
    if verdict.accepted:
        enrolled = db.by_id(verdict.tag_id)
        b = prepare_shares(params, enrolled, view.nonces).b
        t_a = compute_reader_tag(params.protocol, enrolled.x, view.nonces, b, params)
        verdict = replace(verdict, reader_auth_ok=bool(prover.check_reader_tag(t_a)))
    return replace(view, t_a=t_a, verdict=verdict)
