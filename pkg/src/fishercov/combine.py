"""Combining the quadratic-form and maximum-form p-values.

Fisher's statistic ``-2 (log p_T + log p_M)`` is chi-squared with 4 degrees
of freedom when the two p-values are independent uniforms, which is the
combined test of record. Bonferroni, Tippett, Stouffer and Cauchy are
provided as comparators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dist import PValue, chisq4_quantile, chisq4_sf, normal_quantile, normal_sf
from .errors import InvalidPValueError, UsageError

__all__ = ["CombinedOutcome", "METHODS", "fisher_combine", "alt_combine", "combine"]

METHODS = ("fisher", "bonferroni", "tippett", "stouffer", "cauchy")
_CLAMP = 1e-15


@dataclass(frozen=True)
class CombinedOutcome:
    f: float
    p: PValue
    p_t: PValue
    p_m: PValue
    method: str

    def reject(self, alpha: float) -> bool:
        return self.p.value <= alpha

    def reject_by_quantile(self, alpha: float) -> bool:
        if self.method != "fisher":
            return self.reject(alpha)
        return self.f >= chisq4_quantile(alpha)


def _as_pvalue(p) -> PValue:
    if isinstance(p, PValue):
        if p.log_value > 0.0:
            raise InvalidPValueError(f"log p-value {p.log_value} is positive")
        return p
    try:
        return PValue.from_value(p)
    except ValueError as exc:
        raise InvalidPValueError(str(exc)) from None


def fisher_combine(p_t, p_m) -> CombinedOutcome:
    """Fisher's combination; reads only the log p-values."""
    p_t, p_m = _as_pvalue(p_t), _as_pvalue(p_m)
    f = -2.0 * (p_t.log_value + p_m.log_value)
    if math.isinf(f):
        return CombinedOutcome(f, PValue(0.0, -math.inf), p_t, p_m, "fisher")
    f = max(f, 0.0)  # -0.0 when both p-values are 1
    return CombinedOutcome(f, chisq4_sf(f), p_t, p_m, "fisher")


def _clamp(v: float) -> float:
    return min(max(v, _CLAMP), 1.0 - _CLAMP)


def alt_combine(method: str, p_t, p_m) -> CombinedOutcome:
    """Comparator combinations. ``f`` holds each method's own statistic.

    bonferroni: ``min(1, 2 min(p_t, p_m))``
    tippett:    ``1 - (1 - min(p_t, p_m))^2``
    stouffer:   ``sf((z_t + z_m) / sqrt(2))`` with ``z_k`` the upper quantile of ``p_k``
    cauchy:     ``1/2 - arctan(s) / pi``, ``s`` the mean of ``tan(pi (1/2 - p_k))``
    """
    if method == "fisher":
        return fisher_combine(p_t, p_m)
    if method not in METHODS:
        raise UsageError(f"unknown combination method {method!r}; choose from {', '.join(METHODS)}")
    p_t, p_m = _as_pvalue(p_t), _as_pvalue(p_m)
    lo = min(p_t.value, p_m.value)
    if method == "bonferroni":
        stat = lo
        p = PValue.from_value(min(1.0, 2.0 * lo))
    elif method == "tippett":
        stat = lo
        p = PValue.from_value(-math.expm1(2.0 * math.log1p(-lo)) if lo < 1.0 else 1.0)
    elif method == "stouffer":
        stat = (normal_quantile(_clamp(p_t.value)) + normal_quantile(_clamp(p_m.value))) / math.sqrt(2.0)
        p = normal_sf(stat)
    else:
        stat = 0.5 * math.tan(math.pi * (0.5 - _clamp(p_t.value))) + 0.5 * math.tan(
            math.pi * (0.5 - _clamp(p_m.value))
        )
        if stat > 1.0:
            # pi/2 - arctan(s) == arctan(1/s), free of cancellation
            p = PValue.from_value(math.atan(1.0 / stat) / math.pi)
        else:
            p = PValue.from_value(min(1.0, max(0.0, 0.5 - math.atan(stat) / math.pi)))
    return CombinedOutcome(stat, p, p_t, p_m, method)


def combine(method: str, p_t, p_m) -> CombinedOutcome:
    return alt_combine(method, p_t, p_m)
