"""Sample matrices and the dense linear-algebra kernels the tests rely on."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.linalg.lapack import dpotrf

from .errors import ConvergenceError, DimensionError, FactorizationError, InsufficientDataError

__all__ = [
    "SampleMatrix",
    "as_samples",
    "check_symmetric",
    "center_columns",
    "sample_covariance",
    "cholesky",
    "min_eigenvalue",
]


@dataclass(frozen=True)
class SampleMatrix:
    """An ``n x p`` observation matrix: rows are observations, columns variables."""

    data: np.ndarray
    variable_names: Optional[tuple] = None

    def __post_init__(self):
        data = np.array(self.data, dtype=float, copy=True)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionError(f"expected a non-empty 2-d array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            row, col = np.argwhere(~np.isfinite(data))[0]
            raise ValueError(f"non-finite entry at row {row}, column {col}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.variable_names is not None:
            names = tuple(str(v) for v in self.variable_names)
            if len(names) != data.shape[1]:
                raise DimensionError(
                    f"{len(names)} variable names for {data.shape[1]} columns"
                )
            object.__setattr__(self, "variable_names", names)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    def name_of(self, column: int) -> Optional[str]:
        return None if self.variable_names is None else self.variable_names[column]


def as_samples(x, variable_names: Optional[Sequence[str]] = None) -> SampleMatrix:
    if isinstance(x, SampleMatrix):
        return x
    return SampleMatrix(np.asarray(x, dtype=float), variable_names)


def check_symmetric(a, atol: float = 1e-12) -> np.ndarray:
    """Return ``a`` as a float array after checking it is square and symmetric."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    tol = atol * np.maximum(1.0, np.abs(a))
    if np.any(np.abs(a - a.T) > tol):
        raise ValueError("matrix is not symmetric")
    return a


def _centered(x: SampleMatrix) -> np.ndarray:
    if x.n < 2:
        raise InsufficientDataError(f"need at least 2 observations, got {x.n}")
    return x.data - x.data.mean(axis=0)


def center_columns(x) -> SampleMatrix:
    """Subtract each column's mean."""
    x = as_samples(x)
    return SampleMatrix(_centered(x), x.variable_names)


def sample_covariance(x, divisor: str = "n") -> np.ndarray:
    """Sample covariance with divisor ``"n"`` (default) or ``"n-1"``."""
    x = as_samples(x)
    xc = _centered(x)
    if divisor == "n":
        d = x.n
    elif divisor in ("n-1", "n - 1"):
        d = x.n - 1
    else:
        raise ValueError(f"divisor must be 'n' or 'n-1', got {divisor!r}")
    s = xc.T @ xc / d
    # BLAS may leave last-bit asymmetry
    return 0.5 * (s + s.T)


def cholesky(a) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L @ L.T == a``.

    Raises:
        FactorizationError: with ``pivot`` set to the 0-based index of the first
            leading minor that is not positive definite.
    """
    a = check_symmetric(a, atol=1e-10)
    factor, info = dpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise FactorizationError(info - 1)
    if info < 0:
        raise ValueError(f"illegal argument {-info} to dpotrf")
    return factor


def _gershgorin_upper(a: np.ndarray) -> float:
    radius = np.abs(a).sum(axis=1) - np.abs(np.diag(a))
    return float(np.max(np.diag(a) + radius))


def _power_min_eigenvalue(a, tol, max_iter):
    p = a.shape[0]
    scale = max(1.0, float(np.abs(a).max()))
    c = _gershgorin_upper(a)
    shifted = c * np.eye(p) - a
    # ramp start: the all-ones vector is itself an eigenvector of many test matrices
    v = 1.0 + np.arange(1, p + 1) / p
    v /= np.linalg.norm(v)
    residual = np.inf
    for _ in range(max_iter):
        w = shifted @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return c
        v = w / norm
        av = a @ v
        lam = float(v @ av)
        residual = float(np.linalg.norm(av - lam * v))
        if residual <= 1e-4 * scale:
            break
    else:
        raise ConvergenceError(max_iter, residual)
    # Rayleigh-quotient iteration, cubically convergent from here
    for _ in range(20):
        if residual <= tol * scale:
            return lam
        try:
            w = np.linalg.solve(a - lam * np.eye(p), v)
        except np.linalg.LinAlgError:
            return lam  # lam is an eigenvalue to working precision
        v = w / np.linalg.norm(w)
        av = a @ v
        lam = float(v @ av)
        residual = float(np.linalg.norm(av - lam * v))
    if residual > tol * scale:
        raise ConvergenceError(max_iter, residual)
    return lam


def min_eigenvalue(a, tol: float = 1e-10, method: str = "lapack", max_iter: int = 100_000) -> float:
    """Smallest eigenvalue of a symmetric matrix.

    ``method="lapack"`` asks LAPACK's ``dsyevr`` for the lowest eigenvalue only
    and is what the simulation code uses. ``method="power"`` runs power
    iteration on ``c*I - a`` (``c`` the Gershgorin upper bound, fixed ramp start
    vector) and then Rayleigh-quotient iteration. It reaches ``tol`` only when
    the lowest eigenvalue is well separated from the next one.
    """
    a = check_symmetric(a)
    if method == "lapack":
        return float(eigh(a, eigvals_only=True, subset_by_index=[0, 0], driver="evr")[0])
    if method == "power":
        return _power_min_eigenvalue(a, tol, max_iter)
    raise ValueError(f"unknown method {method!r}")
