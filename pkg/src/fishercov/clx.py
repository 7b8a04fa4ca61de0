"""Maximum-form test: the largest standardised squared entrywise difference."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .dist import PValue, gumbel_quantile, gumbel_sf
from .errors import DegenerateVariableError, DimensionError, InsufficientDataError
from .matcore import SampleMatrix, as_samples

__all__ = ["ClxOutcome", "theta_hat", "clx_test", "normalize_max"]


@dataclass(frozen=True)
class ClxOutcome:
    m: float
    m_norm: float
    p: PValue
    argmax: Tuple[int, int]

    method = "clx"

    def reject(self, alpha: float) -> bool:
        return self.p.value <= alpha

    def reject_by_quantile(self, alpha: float) -> bool:
        return self.m_norm >= gumbel_quantile(alpha)


def _moments(x: SampleMatrix):
    if x.n < 2:
        raise InsufficientDataError(f"need at least 2 observations, got {x.n}")
    xc = x.data - x.data.mean(axis=0)
    sigma = xc.T @ xc / x.n
    sigma = 0.5 * (sigma + sigma.T)
    sq = xc * xc
    theta = sq.T @ sq / x.n - sigma * sigma
    theta = 0.5 * (theta + theta.T)
    # the defining sum of squares is non-negative; clip rounding residue
    np.maximum(theta, 0.0, out=theta)
    diag = np.diag(theta)
    bad = np.flatnonzero(diag <= 0.0)
    if bad.size:
        col = int(bad[0])
        raise DegenerateVariableError(col, x.name_of(col))
    return sigma, theta


def theta_hat(x) -> np.ndarray:
    """Variance estimates of the centred products behind each sample covariance.

    ``theta[i, j] = mean_u ((x_ui - xbar_i)(x_uj - xbar_j) - s_ij)^2`` with
    ``s`` the divisor-n sample covariance.
    """
    return _moments(as_samples(x))[1]


def normalize_max(m: float, p: int) -> float:
    """``m - 4 log p + log log p``."""
    return m - 4.0 * math.log(p) + math.log(math.log(p))


def clx_test(x, y) -> ClxOutcome:
    """Maximum-form test of ``Sigma1 == Sigma2``.

    The maximum runs over ``i <= j`` including the diagonal; ties go to the
    lexicographically smallest ``(i, j)``. An entry whose variance estimate is
    zero in both samples contributes 0 when the covariances agree and
    ``inf`` otherwise.
    """
    x, y = as_samples(x), as_samples(y)
    if x.p != y.p:
        raise DimensionError(f"samples have different dimensions: {x.p} and {y.p}")
    p = x.p
    if p < 3:
        raise DimensionError(f"the maximum-form test needs p >= 3, got {p}")
    s1, t1 = _moments(x)
    s2, t2 = _moments(y)
    num = (s1 - s2) ** 2
    den = t1 / x.n + t2 / y.n
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = num / den
    stat[(den == 0.0) & (num == 0.0)] = 0.0
    stat[np.tril_indices(p, -1)] = -np.inf
    flat = int(np.argmax(stat))
    i, j = divmod(flat, p)
    m = float(stat[i, j])
    m_norm = normalize_max(m, p)
    return ClxOutcome(m, m_norm, gumbel_sf(m_norm) if math.isfinite(m_norm) else PValue(0.0, -math.inf), (i, j))
