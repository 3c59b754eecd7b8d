"""Binary symmetric channel used for the forward and backward radio links."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import BitString, RngStream


@dataclass(frozen=True)
class ChannelModel:
    """Flips every transmitted bit independently with probability ``ber``."""

    ber: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.ber <= 1.0) or math.isnan(self.ber):
            raise ValueError(f"bit error rate must be in [0, 1], got {self.ber!r}")


NOISELESS = ChannelModel(0.0)


def per_link_ber(end_to_end: float) -> float:
    """Per-link flip rate whose two-link composition flips with ``end_to_end``.

    Two cascaded channels with rate q flip a bit with 2q(1-q); inverting that
    needs ``end_to_end <= 1/2``.
    """
    if not 0.0 <= end_to_end <= 0.5:
        raise ValueError("end-to-end bit error rate must be in [0, 1/2]")
    return (1.0 - math.sqrt(1.0 - 2.0 * end_to_end)) / 2.0


@dataclass(frozen=True)
class LinkPair:
    forward: ChannelModel = NOISELESS
    backward: ChannelModel = NOISELESS

    @classmethod
    def symmetric(cls, ber: float, mode: str = "per-link") -> "LinkPair":
        """Both links at the same rate.

        ``mode="per-link"`` applies ``ber`` to each link; ``"end-to-end"``
        picks the per-link rate so a challenge/response round trip sees ``ber``.
        """
        if mode == "per-link":
            q = ber
        elif mode == "end-to-end":
            q = per_link_ber(ber)
        else:
            raise ValueError(f"unknown BER mode {mode!r}")
        ch = ChannelModel(q)
        return cls(ch, ch)


def transmit_bit(bit: int, ch: ChannelModel, rng: RngStream) -> int:
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    if ch.ber == 0.0:
        return bit
    if ch.ber == 1.0:
        return bit ^ 1
    return bit ^ int(rng.generator.random() < ch.ber)


def transmit_bits(bits: BitString, ch: ChannelModel, rng: RngStream) -> BitString:
    n = bits.length
    if n == 0 or ch.ber == 0.0:
        return bits
    mask = 0
    for start in range(0, n, 64):
        width = min(64, n - start)
        mask = (mask << width) | int(rng.bernoulli_mask(1, width, ch.ber)[0])
    return BitString(bits.value ^ mask, n)
