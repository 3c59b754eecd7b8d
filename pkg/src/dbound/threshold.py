"""Acceptance threshold under channel noise.

Per-round error rates for an attacker and for an honest tag at per-link
noise ``omega``, Hoeffding bounds on false acceptance and false rejection,
and the threshold that balances the two weighted bounds.  Logarithms are
natural throughout.  Timing errors are left out: delaying a round never
helps the attacker, so only challenge and response errors enter.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass


class RegimeError(ValueError):
    """Input outside the regime p_t < tau/n < p_a where the bounds apply."""


class RegimeWarning(UserWarning):
    pass


def _check_omega(omega: float) -> None:
    if not 0.0 <= omega <= 0.5 or math.isnan(omega):
        raise ValueError(f"omega must be in [0, 1/2], got {omega!r}")


def p_error_attacker(omega: float) -> float:
    """Per-round error probability of the early-challenge relay attacker."""
    _check_omega(omega)
    return 0.5 + 0.75 * omega - 0.5 * omega * omega


def p_error_tag(omega: float) -> float:
    """Per-round error probability of an honest tag: 2w - w^2."""
    _check_omega(omega)
    return 2.0 * omega - omega * omega


def p_a_bound(omega: float) -> float:
    _check_omega(omega)
    return (omega + 1.0) / 2.0


def p_t_bound(omega: float) -> float:
    _check_omega(omega)
    return 2.0 * omega


@dataclass(frozen=True)
class NoiseRates:
    omega: float
    p_err_attacker: float
    p_err_tag: float
    p_a: float
    p_t: float

    @classmethod
    def from_omega(cls, omega: float) -> "NoiseRates":
        return cls(omega, p_error_attacker(omega), p_error_tag(omega), p_a_bound(omega), p_t_bound(omega))


@dataclass(frozen=True)
class LossModel:
    """Loss ``l_a`` for accepting an attacker and ``l_t`` for rejecting a tag."""

    l_a: float = 1.0
    l_t: float = 1.0

    def __post_init__(self):
        if not (self.l_a > 0 and self.l_t > 0) or not (math.isfinite(self.l_a) and math.isfinite(self.l_t)):
            raise ValueError("losses must be positive and finite")

    @property
    def rho(self) -> float:
        return self.l_t / self.l_a

    @classmethod
    def from_rho(cls, rho: float) -> "LossModel":
        return cls(1.0, rho)


def in_regime(n: int, p_t: float, p_a: float, tau: float) -> bool:
    return p_t < tau / n < p_a


def _check_n(n) -> None:
    if not n >= 1:
        raise ValueError("n must be at least 1")


def hoeffding_false_accept(n: int, p_a: float, tau: float) -> float:
    """Bound on Pr(errors < tau | attacker): exp(-(2/n)(n p_a - tau)^2)."""
    _check_n(n)
    if not p_a > tau / n:
        raise RegimeError(f"false-accept bound needs p_a > tau/n (p_a={p_a}, tau/n={tau / n})")
    return math.exp(-2.0 / n * (n * p_a - tau) ** 2)


def hoeffding_false_reject(n: int, p_t: float, tau: float) -> float:
    """Bound on Pr(errors >= tau | honest tag): exp(-(2/n)(n p_t - tau)^2)."""
    _check_n(n)
    if not p_t < tau / n:
        raise RegimeError(f"false-reject bound needs p_t < tau/n (p_t={p_t}, tau/n={tau / n})")
    return math.exp(-2.0 / n * (n * p_t - tau) ** 2)


@dataclass(frozen=True)
class ThresholdModel:
    n: int
    rates: NoiseRates
    losses: LossModel
    tau: float

    def __post_init__(self):
        _check_n(self.n)
        if not in_regime(self.n, self.rates.p_t, self.rates.p_a, self.tau):
            raise RegimeError(
                f"need p_t < tau/n < p_a, got {self.rates.p_t} < {self.tau / self.n} < {self.rates.p_a}"
            )

    @classmethod
    def optimal(cls, n: int, omega: float, losses: LossModel = LossModel()) -> "ThresholdModel":
        rates = NoiseRates.from_omega(omega)
        tau = optimal_threshold(n, rates.p_t, rates.p_a, losses.rho)
        return cls(n, rates, losses, tau)


def expected_loss_bounds(model: ThresholdModel) -> tuple[float, float, float]:
    """(bound on E[L|A], bound on E[L|T], their max)."""
    fa = hoeffding_false_accept(model.n, model.rates.p_a, model.tau) * model.losses.l_a
    fr = hoeffding_false_reject(model.n, model.rates.p_t, model.tau) * model.losses.l_t
    return fa, fr, max(fa, fr)


def optimal_threshold(n: int, p_t: float, p_a: float, rho: float) -> float:
    """Threshold equating the two weighted Hoeffding bounds.

    Warns with :class:`RegimeWarning` if the result leaves p_t < tau/n < p_a.
    """
    _check_n(n)
    if p_t == p_a:
        raise ValueError("p_t == p_a: the threshold is undefined")
    if not rho > 0:
        raise ValueError("rho must be positive")
    tau = (2.0 * n * (p_t * p_t - p_a * p_a) - math.log(rho)) / (4.0 * (p_t - p_a))
    if not in_regime(n, p_t, p_a, tau):
        warnings.warn(f"tau={tau:.6g} is outside p_t < tau/n < p_a for n={n}", RegimeWarning, stacklevel=2)
    return tau


def optimal_threshold_specialized(n: int, omega: float, rho: float) -> float:
    """n(5w+1)/4 - ln(rho)/(6w-2), valid for 0 < w < 1/3."""
    _check_n(n)
    if not 0.0 < omega < 1.0 / 3.0:
        raise ValueError("the specialised formula needs 0 < omega < 1/3")
    if not rho > 0:
        raise ValueError("rho must be positive")
    return n * (5.0 * omega + 1.0) / 4.0 - math.log(rho) / (6.0 * omega - 2.0)


def integer_threshold(tau: float) -> int:
    """Ceiling of tau, tolerant of rounding noise just above an integer."""
    if not math.isfinite(tau):
        raise ValueError("tau must be finite")
    return math.ceil(tau - 1e-9 * max(1.0, abs(tau)))
