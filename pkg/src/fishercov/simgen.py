"""Covariance models for the size and power experiments, plus a seeded sampler.

Null models (``Sigma1 == Sigma2 == Sigma*``):

* ``m1`` identity.
* ``m2`` inverse of the AR(1) matrix with entries ``0.5^|i-j|``.
* ``m3`` block diagonal with 5x5 blocks ``0.5 I + 0.5 11'``.
* ``m4`` ``(-1)^(i+j) 0.4^(|i-j|^(1/10))``, taking ``0^(1/10) = 0`` on the diagonal.
* ``m5`` a random sparse matrix, unit diagonal and off-diagonal entries
  ``0.5 * Bernoulli(0.05)``, shifted and rescaled to be positive definite.

Random streams: replication ``r`` of a run with master seed ``s`` draws from
``child_rng(s, r)``, a generator seeded by ``SeedSequence(s, spawn_key=(r,))``.
The stream therefore depends on ``(s, r)`` only, not on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import cho_solve

from .errors import SpecError
from .matcore import SampleMatrix, cholesky, min_eigenvalue

__all__ = [
    "MODELS",
    "ALTERNATIVES",
    "CovModelSpec",
    "CovPair",
    "child_rng",
    "null_covariance",
    "sparse_alternative",
    "dense_alternative",
    "build_pair",
    "mvn_sample",
]

MODELS = ("m1", "m2", "m3", "m4", "m5")
ALTERNATIVES = ("null", "sparse", "dense")
# positive-definiteness margin used by the shifted models
_MARGIN = 0.05


@dataclass(frozen=True)
class CovModelSpec:
    model: str
    p: int
    alternative: str = "null"
    rho: Optional[float] = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise SpecError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.alternative not in ALTERNATIVES:
            raise SpecError(
                f"unknown alternative {self.alternative!r}; choose from {', '.join(ALTERNATIVES)}"
            )
        if int(self.p) != self.p or self.p < 1:
            raise SpecError(f"p must be a positive integer, got {self.p!r}")
        if self.model == "m3" and self.p % 5:
            raise SpecError(f"model m3 needs p divisible by 5, got {self.p}")
        wants_rho = self.model == "m1" and self.alternative == "dense"
        if wants_rho and self.rho is None:
            raise SpecError("the dense alternative of model m1 needs rho")
        if not wants_rho and self.rho is not None:
            raise SpecError("rho only applies to the dense alternative of model m1")
        if self.alternative == "sparse" and self.p < 4:
            raise SpecError(f"the sparse alternative needs p >= 4, got {self.p}")

    @property
    def label(self) -> str:
        if self.rho is not None:
            return f"{self.alternative}(rho={self.rho:g})"
        return self.alternative


@dataclass(frozen=True)
class CovPair:
    sigma1: np.ndarray
    sigma2: np.ndarray
    delta_used: float = 0.0
    perturbed_entries: List[Tuple[int, int, float]] = field(default_factory=list)


def child_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent generator for work unit ``index`` of a run seeded by ``master_seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(int(index),)))


def _ar1(p: int, rho: float) -> np.ndarray:
    lag = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    return rho ** lag.astype(float)


def _signed_power_decay(p: int, base: float) -> np.ndarray:
    idx = np.arange(p)
    lag = np.abs(np.subtract.outer(idx, idx)).astype(float)
    sign = np.where(np.add.outer(idx, idx) % 2 == 0, 1.0, -1.0)
    # lag**0.1 is 0.0 on the diagonal, so those entries are exactly 1
    return sign * base ** (lag ** 0.1)


def _inverse_spd(a: np.ndarray) -> np.ndarray:
    factor = cholesky(a)
    inv = cho_solve((factor, True), np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)


def null_covariance(spec: CovModelSpec, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """The null covariance ``Sigma*`` of ``spec.model``; ``m5`` needs ``rng``."""
    p = spec.p
    if spec.model == "m1":
        return np.eye(p)
    if spec.model == "m2":
        return _inverse_spd(_ar1(p, 0.5))
    if spec.model == "m3":
        block = 0.5 * np.eye(5) + 0.5 * np.ones((5, 5))
        return np.kron(np.eye(p // 5), block)
    if spec.model == "m4":
        return _signed_power_decay(p, 0.4)
    if rng is None:
        raise SpecError("model m5 is random and needs a random stream")
    upper = 0.5 * rng.binomial(1, 0.05, size=(p, p)).astype(float)
    raw = np.triu(upper, 1)
    raw = raw + raw.T + np.eye(p)
    delta = abs(min_eigenvalue(raw)) + _MARGIN
    return (raw + delta * np.eye(p)) / (1.0 + delta)


def sparse_alternative(base, rng: np.random.Generator) -> CovPair:
    """Perturb four random upper-triangle entries (and their mirrors) of ``base``.

    Each magnitude is ``Unif(0, 4) * max_j base_jj``, always positive. Both
    returned matrices get the same ridge ``delta * I`` so that each has
    smallest eigenvalue at least 0.05.
    """
    base = np.asarray(base, dtype=float)
    p = base.shape[0]
    if p < 4:
        raise SpecError(f"the sparse alternative needs p >= 4, got {p}")
    rows, cols = np.triu_indices(p, 1)
    picks = rng.choice(rows.size, size=4, replace=False)
    scale = float(np.max(np.diag(base)))
    magnitudes = rng.uniform(0.0, 4.0, size=4) * scale
    u = np.zeros((p, p))
    entries = []
    for k, mag in zip(picks, magnitudes):
        i, j = int(rows[k]), int(cols[k])
        u[i, j] = u[j, i] = mag
        entries.append((i, j, float(mag)))
    delta = abs(min(min_eigenvalue(base + u), min_eigenvalue(base))) + _MARGIN
    sigma1 = base + delta * np.eye(p)
    return CovPair(sigma1, sigma1 + u, delta, entries)


def dense_alternative(spec: CovModelSpec, rng: Optional[np.random.Generator] = None) -> CovPair:
    """Model-specific dense alternative.

    m1 pairs the identity with AR(1)(rho); m4 pairs the 0.4-base matrix with
    its 0.6-base analogue; m2, m3 and m5 pair ``Sigma*`` with the identity.
    """
    if spec.alternative != "dense":
        raise SpecError(f"expected a dense-alternative spec, got {spec.alternative!r}")
    p = spec.p
    if spec.model == "m1":
        return CovPair(np.eye(p), _ar1(p, float(spec.rho)))
    if spec.model == "m4":
        return CovPair(_signed_power_decay(p, 0.4), _signed_power_decay(p, 0.6))
    return CovPair(null_covariance(spec, rng), np.eye(p))


def build_pair(spec: CovModelSpec, rng: np.random.Generator, frozen_u: Optional[CovPair] = None) -> CovPair:
    """The ``(Sigma1, Sigma2)`` pair for one replication of ``spec``.

    ``frozen_u``, when given, is reused for the sparse alternative instead of
    drawing a fresh perturbation.
    """
    if spec.alternative == "null":
        sigma = null_covariance(spec, rng)
        return CovPair(sigma, sigma)
    if spec.alternative == "dense":
        return dense_alternative(spec, rng)
    if frozen_u is not None:
        return frozen_u
    return sparse_alternative(null_covariance(spec, rng), rng)


def mvn_sample(sigma, n: int, rng: np.random.Generator, factor: Optional[np.ndarray] = None) -> SampleMatrix:
    """``n`` draws from ``N(0, sigma)`` as rows ``z @ L.T`` with ``L = cholesky(sigma)``."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if factor is None:
        factor = cholesky(sigma)
    z = rng.standard_normal((n, factor.shape[0]))
    return SampleMatrix(z @ factor.T)
