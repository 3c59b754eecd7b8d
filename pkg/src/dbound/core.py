"""Bit strings, keyed pseudo-random functions and seeded random streams.

Everything else in the package is built on three primitives:

* :class:`BitString` -- an immutable, fixed-length bit vector.  Bit 0 is the
  first bit on the wire and is stored as the most significant bit of
  ``value``, so ``BitString.from_str("1010").value == 0b1010``.
* :class:`Prf` -- a keyed function ``f_key(fields...) -> out_len bits``.
  :class:`HmacPrf` is the default; :class:`Mix64Prf` is a fast,
  non-cryptographic stand-in with a vectorised batch path.
* :class:`RngStream` -- a Philox generator whose key is derived from a
  64-bit master seed and a text label.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "BitLengthError",
    "BitString",
    "PrfKey",
    "PrfInputs",
    "Prf",
    "HmacPrf",
    "Mix64Prf",
    "DEFAULT_PRF",
    "get_prf",
    "prf_eval",
    "prf_many",
    "RngStream",
    "xor",
    "hamming_distance",
    "random_bits",
    "popcount",
]

MAX_BITS = 256


class BitLengthError(ValueError):
    """Raised when bit strings of incompatible lengths are combined."""


@dataclass(frozen=True, slots=True)
class BitString:
    value: int
    length: int

    def __post_init__(self):
        if not isinstance(self.length, int) or self.length < 0:
            raise BitLengthError(f"invalid length {self.length!r}")
        if not isinstance(self.value, int) or self.value < 0 or self.value >> self.length:
            raise ValueError(f"value {self.value!r} does not fit in {self.length} bits")

    @classmethod
    def from_str(cls, text: str) -> "BitString":
        text = text.replace("_", "").replace(" ", "")
        if any(ch not in "01" for ch in text):
            raise ValueError(f"not a bit string: {text!r}")
        return cls(int(text, 2) if text else 0, len(text))

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitString":
        value = 0
        length = 0
        for b in bits:
            if b not in (0, 1):
                raise ValueError(f"bit must be 0 or 1, got {b!r}")
            value = (value << 1) | int(b)
            length += 1
        return cls(value, length)

    @classmethod
    def from_bytes(cls, data: bytes) -> "BitString":
        return cls(int.from_bytes(data, "big"), 8 * len(data))

    @classmethod
    def zeros(cls, n: int) -> "BitString":
        return cls(0, n)

    @classmethod
    def ones(cls, n: int) -> "BitString":
        return cls((1 << n) - 1, n)

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, i: int) -> int:
        if i < 0:
            i += self.length
        if not 0 <= i < self.length:
            raise IndexError(f"bit index {i} out of range for length {self.length}")
        return (self.value >> (self.length - 1 - i)) & 1

    def __iter__(self):
        for i in range(self.length):
            yield (self.value >> (self.length - 1 - i)) & 1

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple(self)

    def __str__(self) -> str:
        return format(self.value, f"0{self.length}b") if self.length else ""

    def __repr__(self) -> str:
        return f"BitString('{self}')"

    def __xor__(self, other: "BitString") -> "BitString":
        return xor(self, other)

    def __add__(self, other: "BitString") -> "BitString":
        return BitString((self.value << other.length) | other.value, self.length + other.length)

    def __invert__(self) -> "BitString":
        return BitString(self.value ^ ((1 << self.length) - 1), self.length)

    def popcount(self) -> int:
        return popcount(self.value)

    def flip(self, i: int) -> "BitString":
        self[i]  # bounds check
        return BitString(self.value ^ (1 << (self.length - 1 - i)), self.length)

    def to_bytes(self) -> bytes:
        return self.value.to_bytes((self.length + 7) // 8, "big")

    def hex(self) -> str:
        return self.to_bytes().hex()

    def slice(self, start: int, stop: int) -> "BitString":
        if not 0 <= start <= stop <= self.length:
            raise IndexError(f"slice [{start}:{stop}] out of range for length {self.length}")
        width = stop - start
        return BitString((self.value >> (self.length - stop)) & ((1 << width) - 1), width)


def popcount(v: int) -> int:
    return bin(v).count("1")


def _check_same_length(a: BitString, b: BitString) -> None:
    if a.length != b.length:
        raise BitLengthError(f"length mismatch: {a.length} != {b.length}")


def xor(a: BitString, b: BitString) -> BitString:
    _check_same_length(a, b)
    return BitString(a.value ^ b.value, a.length)


def hamming_distance(a: BitString, b: BitString) -> int:
    _check_same_length(a, b)
    return popcount(a.value ^ b.value)


# --------------------------------------------------------------------------
# Keyed pseudo-random functions
# --------------------------------------------------------------------------

Field = Union[BitString, bytes]


@dataclass(frozen=True)
class PrfKey:
    key_bits: BitString

    def __post_init__(self):
        if self.key_bits.length == 0:
            raise ValueError("PRF key must be non-empty")
        if self.key_bits.length > MAX_BITS:
            raise ValueError(f"PRF keys longer than {MAX_BITS} bits are not supported")


def _as_key(key: Union[PrfKey, BitString]) -> PrfKey:
    return key if isinstance(key, PrfKey) else PrfKey(key)


def _field_bits(field: Field) -> int:
    return field.length if isinstance(field, BitString) else 8 * len(field)


def encode_field(field: Field) -> bytes:
    """32-bit big-endian bit length, then the payload bytes."""
    if isinstance(field, BitString):
        payload = field.to_bytes()
    elif isinstance(field, (bytes, bytearray)):
        payload = bytes(field)
    else:
        raise TypeError(f"PRF field must be BitString or bytes, not {type(field).__name__}")
    return _field_bits(field).to_bytes(4, "big") + payload


@dataclass(frozen=True)
class PrfInputs:
    """Ordered PRF argument tuple.  Labels are for humans and not encoded."""

    fields: tuple[Field, ...]
    labels: tuple[str, ...] = ()

    @classmethod
    def of(cls, *fields: Field, labels: Sequence[str] = ()) -> "PrfInputs":
        return cls(tuple(fields), tuple(labels))

    def encode(self) -> bytes:
        return b"".join(encode_field(f) for f in self.fields)


class Prf:
    """Keyed PRF interface.

    Subclasses implement :meth:`evaluate`.  :meth:`many` evaluates the same
    PRF over arrays of at most 64-bit values and may be overridden with a
    vectorised path.
    """

    name = "abstract"

    def evaluate(self, key: PrfKey, inputs: PrfInputs, out_len: int) -> BitString:
        raise NotImplementedError

    def __call__(self, key, inputs: PrfInputs, out_len: int) -> BitString:
        if out_len < 1:
            raise ValueError("out_len must be at least 1")
        return self.evaluate(_as_key(key), inputs, out_len)

    def many(self, keys, key_len: int, fields: Sequence, out_len: int) -> np.ndarray:
        """Evaluate over a batch.

        ``keys`` is an int or a uint64 array; each entry of ``fields`` is
        ``bytes``, a :class:`BitString`, or a ``(values, nbits)`` pair where
        ``values`` is an int or a uint64 array.  Arrays broadcast against
        each other.  Returns a uint64 array of ``out_len`` (<= 64) bit values.
        """
        if out_len > 64:
            raise ValueError("batch PRF evaluation is limited to 64-bit outputs")
        arrays = [np.asarray(keys, dtype=np.uint64)]
        for f in fields:
            if isinstance(f, tuple):
                arrays.append(np.asarray(f[0], dtype=np.uint64))
        shape = np.broadcast_shapes(*(a.shape for a in arrays))
        keys_b = np.broadcast_to(np.asarray(keys, dtype=np.uint64), shape).ravel()
        cols = []
        for f in fields:
            if isinstance(f, tuple):
                cols.append((np.broadcast_to(np.asarray(f[0], dtype=np.uint64), shape).ravel(), f[1]))
            else:
                cols.append(f)
        out = np.empty(keys_b.shape, dtype=np.uint64)
        for j in range(keys_b.size):
            row = []
            for f in cols:
                if isinstance(f, tuple):
                    row.append(BitString(int(f[0][j]), f[1]))
                else:
                    row.append(f)
            out[j] = self(BitString(int(keys_b[j]), key_len), PrfInputs(tuple(row)), out_len).value
        return out.reshape(shape)


class HmacPrf(Prf):
    """HMAC in counter mode: block j = HMAC(key, encode(inputs) || j)."""

    def __init__(self, digest: str = "sha256"):
        self.digest = digest
        self.name = f"hmac-{digest}"
        self._block_bits = 8 * hashlib.new(digest).digest_size

    def evaluate(self, key: PrfKey, inputs: PrfInputs, out_len: int) -> BitString:
        key_bytes = encode_field(key.key_bits)
        msg = inputs.encode()
        nblocks = -(-out_len // self._block_bits)
        stream = b"".join(
            hmac.digest(key_bytes, msg + j.to_bytes(4, "big"), self.digest) for j in range(nblocks)
        )
        total = 8 * len(stream)
        return BitString(int.from_bytes(stream, "big") >> (total - out_len), out_len)

    def many(self, keys, key_len: int, fields: Sequence, out_len: int) -> np.ndarray:
        # same encoding as evaluate(); messages are laid out as one byte matrix
        if out_len > 64:
            raise ValueError("batch PRF evaluation is limited to 64-bit outputs")
        if key_len > 64:
            return super().many(keys, key_len, fields, out_len)
        arrays = [np.asarray(keys, dtype=np.uint64)]
        arrays += [np.asarray(f[0], dtype=np.uint64) for f in fields if isinstance(f, tuple)]
        shape = np.broadcast_shapes(*(a.shape for a in arrays))
        size = int(np.prod(shape))

        def column(values, nbits):
            v = np.broadcast_to(np.asarray(values, dtype=np.uint64), shape).ravel()
            head = np.frombuffer(nbits.to_bytes(4, "big"), dtype=np.uint8)
            body = v.astype(">u8").view(np.uint8).reshape(size, 8)[:, 8 - (nbits + 7) // 8 :]
            return np.hstack([np.broadcast_to(head, (size, 4)), body])

        cols = []
        for f in fields:
            if isinstance(f, tuple):
                if f[1] > 64:
                    return super().many(keys, key_len, fields, out_len)
                cols.append(column(*f))
            else:
                enc = np.frombuffer(encode_field(f) , dtype=np.uint8)
                cols.append(np.broadcast_to(enc, (size, enc.size)))
        cols.append(np.zeros((size, 4), dtype=np.uint8))  # block counter 0
        msgs = np.ascontiguousarray(np.hstack(cols)).tobytes()
        keyb = np.ascontiguousarray(column(arrays[0], key_len)).tobytes()
        mlen, klen = len(msgs) // size, len(keyb) // size
        shift = self._block_bits - out_len
        digest, hd = self.digest, hmac.digest
        out = [
            int.from_bytes(hd(keyb[j * klen : (j + 1) * klen], msgs[j * mlen : (j + 1) * mlen], digest)[:8], "big")
            for j in range(size)
        ]
        return (np.array(out, dtype=np.uint64) >> np.uint64(64 - out_len)).reshape(shape)


_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix_int(z: int) -> int:
    z = (z + _GOLDEN) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def _mix_arr(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z + np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _words(value: int, nbits: int) -> list[int]:
    nwords = max(1, -(-nbits // 64))
    return [(value >> (64 * k)) & _M64 for k in range(nwords)]


class Mix64Prf(Prf):
    """Fast keyed mixing function with no cryptographic strength.

    Absorbs ``(bit length, 64-bit words...)`` of the key and every field into
    a 64-bit state through the splitmix64 finaliser, then squeezes output
    block j as ``mix(state ^ mix(j))``.  Use it for bulk simulations and as a
    test double; it is deterministic and well balanced, not secure.
    """

    name = "mix64"

    @staticmethod
    def _absorb(state: int, value: int, nbits: int) -> int:
        state = _mix_int(state ^ nbits)
        for w in _words(value, nbits):
            state = _mix_int(state ^ w)
        return state

    def evaluate(self, key: PrfKey, inputs: PrfInputs, out_len: int) -> BitString:
        state = self._absorb(0, key.key_bits.value, key.key_bits.length)
        for f in inputs.fields:
            if isinstance(f, BitString):
                state = self._absorb(state, f.value, f.length)
            else:
                state = self._absorb(state, int.from_bytes(bytes(f)[::-1], "little"), 8 * len(f))
        nblocks = -(-out_len // 64)
        acc = 0
        for j in range(nblocks):
            acc = (acc << 64) | _mix_int(state ^ _mix_int(j))
        return BitString(acc >> (64 * nblocks - out_len), out_len)

    def many(self, keys, key_len: int, fields: Sequence, out_len: int) -> np.ndarray:
        if out_len > 64 or key_len > 64:
            return super().many(keys, key_len, fields, out_len)
        state = _mix_arr(np.asarray(key_len, dtype=np.uint64))
        state = _mix_arr(state ^ np.asarray(keys, dtype=np.uint64))
        for f in fields:
            if isinstance(f, tuple):
                values, nbits = f
                if nbits > 64:
                    return super().many(keys, key_len, fields, out_len)
                state = _mix_arr(state ^ np.uint64(nbits))
                state = _mix_arr(state ^ np.asarray(values, dtype=np.uint64))
            else:
                if isinstance(f, BitString):
                    value, nbits = f.value, f.length
                else:
                    value, nbits = int.from_bytes(bytes(f)[::-1], "little"), 8 * len(f)
                state = _mix_arr(state ^ np.uint64(nbits))
                for w in _words(value, nbits):
                    state = _mix_arr(state ^ np.uint64(w))
        out = _mix_arr(state ^ np.uint64(_mix_int(0)))
        return out >> np.uint64(64 - out_len)


DEFAULT_PRF: Prf = HmacPrf()

_PRFS = {"hmac-sha256": DEFAULT_PRF, "mix64": Mix64Prf()}


def get_prf(name: Union[str, Prf]) -> Prf:
    if isinstance(name, Prf):
        return name
    try:
        return _PRFS[name]
    except KeyError:
        raise ValueError(f"unknown PRF {name!r}; choose from {sorted(_PRFS)}") from None


def prf_eval(key, inputs: PrfInputs, out_len: int, prf: Prf = DEFAULT_PRF) -> BitString:
    return prf(key, inputs, out_len)


def prf_many(prf: Prf, keys, key_len: int, fields: Sequence, out_len: int) -> np.ndarray:
    return prf.many(keys, key_len, fields, out_len)


# --------------------------------------------------------------------------
# Random streams
# --------------------------------------------------------------------------


class RngStream:
    """Deterministic random stream for one ``(seed, label)`` pair.

    The Philox key is the first 128 bits of SHA-256 over the big-endian seed
    and the UTF-8 label, so streams with different labels are independent
    and a stream can be recreated anywhere from its name alone.
    """

    def __init__(self, seed: int, label: str = ""):
        if not 0 <= seed < 1 << 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = seed
        self.label = label
        digest = hashlib.sha256(seed.to_bytes(8, "big") + label.encode("utf-8")).digest()
        self.generator = np.random.Generator(np.random.Philox(key=int.from_bytes(digest[:16], "big")))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, label={self.label!r})"

    def child(self, label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.label}/{label}" if self.label else label)

    def bits(self, n: int) -> int:
        """``n`` uniform bits as an int."""
        if n < 1:
            raise ValueError("n must be at least 1")
        nwords = -(-n // 64)
        raw = self.generator.bit_generator.random_raw(nwords)
        acc = 0
        for w in raw.tolist():
            acc = (acc << 64) | w
        return acc >> (64 * nwords - n)

    def bit(self) -> int:
        return self.bits(1)

    def uniform(self) -> float:
        return float(self.generator.random())

    def raw(self, size: int, nbits: int) -> np.ndarray:
        """``size`` uniform values of ``nbits`` (<= 64) bits as uint64."""
        if not 1 <= nbits <= 64:
            raise ValueError("nbits must be in 1..64")
        words = self.generator.bit_generator.random_raw(size)
        return words >> np.uint64(64 - nbits)

    def bernoulli_mask(self, size: int, nbits: int, q: float) -> np.ndarray:
        """``size`` masks of ``nbits`` bits, each bit set independently w.p. ``q``.

        Sparse rates use geometric gaps between set positions on the
        flattened ``size * nbits`` grid; dense rates compare uniforms.
        """
        if not 0.0 <= q <= 1.0:
            raise ValueError("q must be in [0, 1]")
        if not 1 <= nbits <= 64:
            raise ValueError("nbits must be in 1..64")
        out = np.zeros(size, dtype=np.uint64)
        if size == 0 or q == 0.0:
            return out
        if q == 1.0:
            out[:] = np.uint64((1 << nbits) - 1) if nbits < 64 else np.uint64(_M64)
            return out
        total = size * nbits
        if q > 0.1:
            hits = self.generator.random((size, nbits)) < q
            weights = np.uint64(1) << np.arange(nbits, dtype=np.uint64)
            return (hits.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)
        positions = []
        pos = -1
        while True:
            expect = (total - pos) * q
            k = int(expect + 6.0 * expect ** 0.5 + 16)
            gaps = self.generator.geometric(q, size=k)
            chunk = pos + np.cumsum(gaps)
            positions.append(chunk[chunk < total])
            if chunk[-1] >= total:
                break
            pos = int(chunk[-1])
        flat = np.concatenate(positions)
        rows = flat // nbits
        shifts = (flat % nbits).astype(np.uint64)
        np.bitwise_or.at(out, rows, np.uint64(1) << shifts)
        return out


def random_bits(rng: RngStream, n: int) -> BitString:
    return BitString(rng.bits(n), n)
