"""Decoding-error probability machinery for MDS block codes on a binary
symmetric channel.

A block of ``D*n`` coded symbols (``D*k`` information symbols) is decoded
correctly iff at most ``(D*n - D*k)/2`` symbols are corrupted.  With iid
symbol-error probability ``beta`` the error count is binomial, which gives
an exact (but combinatorial) failure probability together with matching
Chernoff-style upper and lower bounds driven by the Bernoulli KL
divergence ``I(x || beta)`` evaluated at ``x = (1 - k/n)/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "DomainError",
    "CodingPoint",
    "BlockSpec",
    "rate_function",
    "theta_star",
    "chernoff_upper",
    "chernoff_upper_raw",
    "lower_bound",
    "exact_error",
    "phi",
    "bernoulli_entropy",
]


class DomainError(ValueError):
    """Argument outside the mathematical domain of a bound."""


# Inputs are nudged off the log singularities by this margin; anything
# further than _CLAMP_TOL outside the domain is a hard error instead.
_CLAMP_EPS = 1e-12
_CLAMP_TOL = 1e-9


def _clamp(value: float, lo: float, hi: float, what: str) -> float:
    if value < lo:
        if lo - value < _CLAMP_TOL:
            return lo
        raise DomainError(f"{what}={value!r} below admissible minimum {lo!r}")
    if value > hi:
        if value - hi < _CLAMP_TOL:
            return hi
        raise DomainError(f"{what}={value!r} above admissible maximum {hi!r}")
    return value


def _check_beta(beta: float) -> None:
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta={beta!r} must lie in (0, 1)")


def rate_function(x: float, beta: float) -> float:
    """KL divergence (nats) between Bernoulli(x) and Bernoulli(beta).

    This is the per-symbol exponent of the decoding-error bound:
    ``x*ln(x/beta) + (1-x)*ln((1-x)/(1-beta))``.
    """
    _check_beta(beta)
    x = _clamp(x, beta + _CLAMP_EPS, 1.0 - _CLAMP_EPS, "x")
    return x * math.log(x / beta) + (1.0 - x) * math.log((1.0 - x) / (1.0 - beta))


def theta_star(x: float, beta: float) -> float:
    """Optimal Chernoff tilting parameter ``ln(x/beta) - ln((1-x)/(1-beta))``.

    Positive for ``x > beta``; plugging it into the raw-parameter bound
    recovers :func:`rate_function` as the exponent.
    """
    _check_beta(beta)
    x = _clamp(x, beta + _CLAMP_EPS, 1.0 - _CLAMP_EPS, "x")
    return math.log(x / beta) - math.log((1.0 - x) / (1.0 - beta))


def bernoulli_entropy(x: float) -> float:
    """Entropy of Bernoulli(x) in nats."""
    x = _clamp(x, _CLAMP_EPS, 1.0 - _CLAMP_EPS, "x")
    return -(x * math.log(x) + (1.0 - x) * math.log(1.0 - x))


def _check_block(deadline: float, n: float) -> None:
    if not deadline >= 1:
        raise DomainError(f"deadline={deadline!r} must be >= 1")
    if not n > 0:
        raise DomainError(f"n={n!r} must be positive")


def chernoff_upper(deadline: float, n: float, x: float, beta: float) -> float:
    """Tightest Chernoff upper bound ``exp(-D*n*I(x||beta))`` on the
    probability of decoding failure.

    Monotone decreasing in ``deadline``, ``n`` and (for ``x > beta``) in
    ``x``.  An infinite deadline gives the limit value 0.
    """
    _check_block(deadline, n)
    if x >= 0.5:
        raise DomainError(f"x={x!r} must be < 0.5")
    exponent = rate_function(x, beta)
    if math.isinf(deadline):
        return 0.0
    return math.exp(-deadline * n * exponent)


def chernoff_upper_raw(deadline: float, n: float, x: float, beta: float, theta: float) -> float:
    """Chernoff bound at an arbitrary positive parameter ``theta``.

    Equals ``exp(-D*n*(theta*x - ln(1 - beta + beta*e^theta)))``; minimised
    over ``theta`` at :func:`theta_star`, where it matches
    :func:`chernoff_upper`.
    """
    _check_block(deadline, n)
    _check_beta(beta)
    if not theta > 0:
        raise DomainError(f"theta={theta!r} must be positive")
    if x >= 0.5:
        raise DomainError(f"x={x!r} must be < 0.5")
    if theta < 700.0:
        log_mgf = math.log1p(beta * math.expm1(theta))
    else:
        # beta*e^theta dominates; expand around it to dodge the overflow
        log_mgf = theta + math.log(beta) + math.log1p((1.0 - beta) * math.exp(-theta) / beta)
    exponent = theta * x - log_mgf
    scaled = -deadline * n * exponent
    if scaled > 700.0:
        return math.inf
    return math.exp(scaled)


def lower_bound(deadline: float, n: float, x: float, beta: float) -> float:
    """Lower bound ``(beta/(1-beta)) * exp(-D*n*(H(x) + I(x||beta)))`` on
    the decoding-failure probability, valid for ``beta < x < 0.5``."""
    _check_block(deadline, n)
    _check_beta(beta)
    if x >= 0.5:
        raise DomainError(f"x={x!r} must be < 0.5")
    exponent = bernoulli_entropy(x) + rate_function(x, beta)
    if math.isinf(deadline):
        return 0.0
    return beta / (1.0 - beta) * math.exp(-deadline * n * exponent)


def _as_positive_int(value: float, what: str) -> int:
    rounded = round(value)
    if abs(value - rounded) > 1e-9 or rounded < 1:
        raise DomainError(f"{what}={value!r} must be a positive integer")
    return int(rounded)


def exact_error(deadline: int, n: int, k: int, beta: float) -> float:
    """Exact probability that a binomial error count defeats the code.

    Returns ``P{X > (D*n - D*k)/2}`` for ``X ~ Binomial(D*n, beta)``; the
    tail is summed term by term in log space, so tiny probabilities come
    out to full relative accuracy.
    """
    total = _as_positive_int(deadline * n, "deadline*n")
    info = _as_positive_int(deadline * k, "deadline*k")
    if info > total:
        raise DomainError(f"k={k!r} must not exceed n={n!r}")
    if not 0.0 <= beta < 1.0:
        raise DomainError(f"beta={beta!r} must lie in [0, 1)")
    if beta == 0.0:
        return 0.0
    threshold = (total - info) / 2.0
    first = int(math.floor(threshold)) + 1
    if first > total:
        return 0.0
    i = np.arange(first, total + 1, dtype=np.float64)
    log_terms = (
        gammaln(total + 1.0)
        - gammaln(i + 1.0)
        - gammaln(total - i + 1.0)
        + i * math.log(beta)
        + (total - i) * math.log1p(-beta)
    )
    peak = float(np.max(log_terms))
    tail = math.exp(peak) * float(np.sum(np.exp(log_terms - peak)))
    return min(tail, 1.0)


def phi(y: float) -> float:
    """Weight ``y * e^-y / (1 - e^-y) = y / (e^y - 1)`` of the loss term in
    the allocation stationarity conditions.

    Strictly decreasing on ``y > 0`` with limits 1 at 0+ and 0 at infinity.
    """
    if not y > 0:
        raise DomainError(f"y={y!r} must be positive")
    if y > 700.0:
        return y * math.exp(-y) if y < 745.0 else 0.0
    return y / math.expm1(y)


@dataclass(frozen=True)
class CodingPoint:
    """A flow's coding-rate state.

    ``x`` is the redundancy parameter ``(1 - rate)/2``; ``theta`` the
    optimal Chernoff tilt and ``exponent`` the per-symbol error exponent
    ``I(x || beta)``, both infinite only in the loss-free limit.
    """

    x: float
    rate: float
    theta: float
    exponent: float

    @classmethod
    def from_x(cls, x: float, beta: float) -> "CodingPoint":
        return cls(
            x=x,
            rate=1.0 - 2.0 * x,
            theta=theta_star(x, beta),
            exponent=rate_function(x, beta),
        )

    @classmethod
    def loss_free(cls) -> "CodingPoint":
        # beta = 0: full-rate code, infinite exponent, zero error.
        return cls(x=0.0, rate=1.0, theta=math.inf, exponent=math.inf)


@dataclass(frozen=True)
class BlockSpec:
    """Block-code geometry: ``deadline * packet_symbols`` coded symbols
    carrying ``deadline * info_symbols`` information symbols."""

    deadline: int
    packet_symbols: float
    info_symbols: float

    def __post_init__(self) -> None:
        if not (isinstance(self.deadline, int) and self.deadline >= 1):
            raise DomainError(f"deadline={self.deadline!r} must be a positive integer")
        if not 0.0 < self.info_symbols <= self.packet_symbols:
            raise DomainError(
                f"need 0 < info_symbols <= packet_symbols, got "
                f"{self.info_symbols!r} vs {self.packet_symbols!r}"
            )

    @property
    def block_length(self) -> float:
        return self.deadline * self.packet_symbols
