"""Quadratic-form test: a U-statistic estimate of ``||Sigma1 - Sigma2||_F^2``.

The second-moment part of the statistic is

    T = A + B - 2C,
    A = sum_{u != v} (x_u'x_v)^2 / (n1 (n1 - 1)),
    B = the same for y,
    C = sum_{u, v} (x_u'y_v)^2 / (n1 n2).

For zero-mean data this is unbiased for the squared Frobenius distance. On
centred data it is not: each term picks up about ``(tr Sigma)^2 / n^2``,
which is ``p / (4n)`` null standard deviations and ruins the size once p is
comparable to n. The default (``full=True``) therefore adds the third- and
fourth-order terms that make A, B and C exactly location invariant and
unbiased. Every term is a contraction of a Gram matrix, so either form costs
O(n^2 p).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dist import PValue, normal_quantile, normal_sf
from .errors import DegenerateDataError, DimensionError, InsufficientDataError
from .matcore import as_samples

__all__ = ["LcComponents", "LcOutcome", "lc_components", "lc_test"]


@dataclass(frozen=True)
class LcComponents:
    a_hat: float  # estimates tr(Sigma1^2)
    b_hat: float  # estimates tr(Sigma2^2)
    c_hat: float  # estimates tr(Sigma1 Sigma2)

    @property
    def t_tilde(self) -> float:
        return self.a_hat + self.b_hat - 2.0 * self.c_hat


@dataclass(frozen=True)
class LcOutcome:
    t_tilde: float
    a_hat: float
    b_hat: float
    c_hat: float
    sigma0_hat: float
    z: float
    p: PValue

    method = "lc"

    def reject(self, alpha: float) -> bool:
        return self.p.value <= alpha

    def reject_by_quantile(self, alpha: float) -> bool:
        return self.z >= normal_quantile(alpha)


def _fsum(a: np.ndarray) -> float:
    return math.fsum(a.ravel().tolist())


def _prepare(x, y, center):
    x, y = as_samples(x), as_samples(y)
    if x.p != y.p:
        raise DimensionError(f"samples have different dimensions: {x.p} and {y.p}")
    if x.n < 2 or y.n < 2:
        raise InsufficientDataError(
            f"each sample needs at least 2 observations, got {x.n} and {y.n}"
        )
    xd, yd = x.data, y.data
    if center:
        xd = xd - xd.mean(axis=0)
        yd = yd - yd.mean(axis=0)
    return xd, yd


def _off_diagonal(g: np.ndarray) -> np.ndarray:
    out = g.copy()
    np.fill_diagonal(out, 0.0)
    return out


def _one_sample_terms(g: np.ndarray):
    """Sums over distinct indices for one Gram matrix ``g``.

    Returns (S2, S3, S4) with
    S2 = sum_{u!=v} g_uv^2, S3 = sum_{u,v,k distinct} g_uv g_vk,
    S4 = sum_{u,v,k,l distinct} g_uv g_kl.
    """
    off = _off_diagonal(g)
    sq = off * off
    s2 = _fsum(sq)
    r = off.sum(axis=1)
    s3 = _fsum(r * r) - s2
    total = _fsum(off)
    s4 = total * total - 4.0 * s3 - 2.0 * s2
    return s2, s3, s4


def lc_components(x, y, center: bool = True, full: bool = True) -> LcComponents:
    """Estimates of tr(Sigma1^2), tr(Sigma2^2) and tr(Sigma1 Sigma2).

    Args:
        x, y: samples, rows are observations.
        center: subtract column means first. The full estimator does not
            depend on it; the second-moment-only form should only skip it
            for data known to have zero mean.
        full: include the higher-order correction terms (needs n >= 4 in
            both samples). ``False`` gives the second-moment-only form.
    """
    xd, yd = _prepare(x, y, center)
    n1, n2 = xd.shape[0], yd.shape[0]
    gx = xd @ xd.T
    gy = yd @ yd.T
    h = xd @ yd.T

    if not full:
        a_hat = _fsum(_off_diagonal(gx) ** 2) / (n1 * (n1 - 1))
        b_hat = _fsum(_off_diagonal(gy) ** 2) / (n2 * (n2 - 1))
        c_hat = _fsum(h * h) / (n1 * n2)
        return LcComponents(a_hat, b_hat, c_hat)

    if n1 < 4 or n2 < 4:
        raise InsufficientDataError("the full estimator needs at least 4 observations per sample")

    def one_sample(g, n):
        s2, s3, s4 = _one_sample_terms(g)
        return (
            s2 / (n * (n - 1))
            - 2.0 * s3 / (n * (n - 1) * (n - 2))
            + s4 / (n * (n - 1) * (n - 2) * (n - 3))
        )

    h2 = h * h
    c2 = _fsum(h2)
    row = h.sum(axis=1)  # over y index, one per x observation
    col = h.sum(axis=0)  # over x index, one per y observation
    # sum_{u != k} sum_v h_uv h_kv  and the mirrored term
    c3x = _fsum(col * col) - c2
    c3y = _fsum(row * row) - c2
    total = _fsum(h)
    c4 = total * total - _fsum(row * row) - _fsum(col * col) + c2
    c_hat = (
        c2 / (n1 * n2)
        - c3x / (n1 * n2 * (n1 - 1))
        - c3y / (n1 * n2 * (n2 - 1))
        + c4 / (n1 * n2 * (n1 - 1) * (n2 - 1))
    )
    return LcComponents(one_sample(gx, n1), one_sample(gy, n2), c_hat)


def lc_test(x, y, center: bool = True, full: bool = True) -> LcOutcome:
    """Quadratic-form test of ``Sigma1 == Sigma2``.

    The null standard deviation is estimated by ``(2/n2) A + (2/n1) B``;
    ``z = T / sigma0`` is referred to the standard normal upper tail.
    """
    xd, yd = as_samples(x), as_samples(y)
    comps = lc_components(xd, yd, center=center, full=full)
    n1, n2 = xd.n, yd.n
    sigma0 = 2.0 * comps.a_hat / n2 + 2.0 * comps.b_hat / n1
    if not sigma0 > 0.0:
        raise DegenerateDataError(
            "null standard deviation estimate is not positive; the samples carry no variation"
        )
    t = comps.t_tilde
    z = t / sigma0
    return LcOutcome(t, comps.a_hat, comps.b_hat, comps.c_hat, sigma0, z, normal_sf(z))
