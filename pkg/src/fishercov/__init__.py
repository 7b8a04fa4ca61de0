"""Two-sample tests of covariance-matrix equality in high dimension.

The quadratic-form test (``lc_test``) targets dense differences, the
maximum-form test (``clx_test``) targets sparse ones, and ``fisher_combine``
merges their p-values into a test that is powerful against both.
"""

from .clx import ClxOutcome, clx_test, theta_hat
from .combine import CombinedOutcome, alt_combine, fisher_combine
from .dist import (
    PValue,
    chisq4_quantile,
    chisq4_sf,
    gumbel_cdf,
    gumbel_quantile,
    gumbel_sf,
    normal_quantile,
    normal_sf,
)
from .errors import (
    ConvergenceError,
    CovTestError,
    DegenerateDataError,
    DegenerateVariableError,
    DimensionError,
    DomainError,
    FactorizationError,
    InsufficientDataError,
    InvalidPValueError,
    McAbortError,
    SpecError,
    UsageError,
)
from .lc import LcComponents, LcOutcome, lc_components, lc_test
from .matcore import SampleMatrix, as_samples, cholesky, min_eigenvalue, sample_covariance
from .simgen import CovModelSpec, CovPair, build_pair, child_rng, mvn_sample


def cov_test(x, y):
    """Run both tests and Fisher's combination on samples ``x`` and ``y``."""
    return fisher_combine(lc_test(x, y).p, clx_test(x, y).p)


__version__ = "0.1.0"
