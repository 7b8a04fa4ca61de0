"""Reference distributions: standard normal, chi-squared(4) and the Gumbel law.

Every survival function returns a :class:`PValue`, which carries the
probability together with its natural log. The log is computed directly in
the tails, so it stays exact after the probability itself has underflowed;
Fisher's combination reads only the log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

from scipy.optimize import brentq

from .errors import DomainError

__all__ = [
    "PValue",
    "normal_sf",
    "normal_quantile",
    "chisq4_sf",
    "chisq4_quantile",
    "gumbel_cdf",
    "gumbel_sf",
    "gumbel_quantile",
]

_SQRT2 = math.sqrt(2.0)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
# log of the Gumbel scale constant 1/sqrt(8*pi)
_LOG_GUMBEL_SCALE = -0.5 * math.log(8.0 * math.pi)
# above this the erfc route loses relative accuracy to subnormals
_NORMAL_TAIL_SWITCH = 30.0
_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class PValue:
    """A probability and its natural logarithm.

    ``value`` may be 0.0 after underflow while ``log_value`` stays finite.
    """

    value: float
    log_value: float

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0):
            raise DomainError(f"p-value {self.value!r} outside [0, 1]")
        if math.isnan(self.log_value) or self.log_value > 0.0:
            raise DomainError(f"log p-value {self.log_value!r} must be <= 0")

    @classmethod
    def from_log(cls, log_value: float) -> "PValue":
        log_value = min(float(log_value), 0.0)
        return cls(math.exp(log_value), log_value)

    @classmethod
    def from_value(cls, value: float) -> "PValue":
        value = float(value)
        if not (0.0 <= value <= 1.0):
            raise DomainError(f"p-value {value!r} outside [0, 1]")
        return cls(value, math.log(value) if value > 0.0 else -math.inf)

    def __float__(self) -> float:
        return self.value


def _check_finite(x: float, name: str = "x") -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return x


def _check_level(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return alpha


def _log_normal_tail(t: float) -> float:
    # Mills-ratio asymptotic series: 1 - 1/t^2 + 3/t^4 - 15/t^6 + ...
    inv_t2 = 1.0 / (t * t)
    term, series = 1.0, 0.0
    for k in range(1, 40):
        term *= -(2 * k - 1) * inv_t2
        if abs(term) < 1e-17:
            break
        series += term
    return -0.5 * t * t - math.log(t) - _HALF_LOG_2PI + math.log1p(series)


def normal_sf(t: float) -> PValue:
    """Upper tail ``1 - Phi(t)`` of the standard normal distribution."""
    t = _check_finite(t, "t")
    if t > _NORMAL_TAIL_SWITCH:
        return PValue.from_log(_log_normal_tail(t))
    value = 0.5 * math.erfc(t / _SQRT2)
    if t < 0.0:
        # value is close to 1: take the log through the small complement
        log_value = math.log1p(-0.5 * math.erfc(-t / _SQRT2))
    else:
        log_value = math.log(value)
    return PValue(value, log_value)


def normal_quantile(alpha: float) -> float:
    """Upper ``alpha`` quantile ``z`` of N(0, 1), so that ``normal_sf(z) == alpha``."""
    alpha = _check_level(alpha)
    z = -_STD_NORMAL.inv_cdf(alpha)
    # one Newton step on the survival function
    density = math.exp(-0.5 * z * z - _HALF_LOG_2PI)
    if density > 0.0:
        z += (normal_sf(z).value - alpha) / density
    return z


def chisq4_sf(x: float) -> PValue:
    """Survival function of chi-squared with 4 degrees of freedom.

    Uses the closed form ``exp(-x/2) * (1 + x/2)``.
    """
    x = _check_finite(x)
    if x < 0.0:
        raise DomainError(f"chi-squared argument must be >= 0, got {x!r}")
    log_value = -0.5 * x + math.log1p(0.5 * x)
    return PValue(math.exp(log_value), min(log_value, 0.0))


def chisq4_quantile(alpha: float) -> float:
    """Upper ``alpha`` quantile of chi-squared(4)."""
    alpha = _check_level(alpha)
    target = math.log(alpha)

    def excess(x: float) -> float:
        return -0.5 * x + math.log1p(0.5 * x) - target

    hi = 4.0
    while excess(hi) > 0.0:
        hi *= 2.0
    return brentq(excess, 0.0, hi, xtol=1e-14, rtol=1e-15, maxiter=200)


def _gumbel_log_cdf(x: float) -> float:
    exponent = _LOG_GUMBEL_SCALE - 0.5 * x
    if exponent > 709.0:
        return -math.inf
    return -math.exp(exponent)


def gumbel_cdf(x: float) -> float:
    """``G(x) = exp(-exp(-x/2) / sqrt(8 pi))``, the limit law of the normalised maximum."""
    x = _check_finite(x)
    return math.exp(_gumbel_log_cdf(x))


def gumbel_sf(x: float) -> PValue:
    """Upper tail ``1 - G(x)`` with full relative accuracy far in the tail."""
    x = _check_finite(x)
    exponent = _LOG_GUMBEL_SCALE - 0.5 * x
    if exponent > 709.0:
        return PValue(1.0, 0.0)
    u = math.exp(exponent)  # u = -log G(x)
    value = -math.expm1(-u)
    if u < 1e-8:
        # 1 - exp(-u) = u * (1 - u/2 + ...), kept in log form past underflow
        log_value = exponent + math.log1p(-0.5 * u)
    elif u < math.log(2.0):
        log_value = math.log(value)
    else:
        log_value = math.log1p(-math.exp(-u))
    return PValue(min(value, 1.0), min(log_value, 0.0))


def gumbel_quantile(alpha: float) -> float:
    """Upper ``alpha`` quantile ``q`` with ``1 - G(q) == alpha`` (closed form)."""
    alpha = _check_level(alpha)
    return -math.log(8.0 * math.pi) - 2.0 * math.log(-math.log1p(-alpha))
