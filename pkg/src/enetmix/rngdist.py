"""Seeded random sampling and density evaluation for the model hierarchy.

All draws flow through :class:`RandomSource`, a thin wrapper around a
counter-based (Philox) bit generator keyed by ``(seed, stream)``. Equal
keys reproduce byte-identical draw sequences; distinct stream ids give
independent, non-overlapping streams, so parallel chains stay
reproducible.

Densities used inside Metropolis steps are evaluated in log space; the
linear-space versions underflow once a truncated prior is raised to the
feature dimension.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special
from scipy.linalg import cho_solve, lapack, solve_triangular

from .errors import (
    DegenerateTruncationError,
    NonPositiveDefiniteError,
    ParameterDomainError,
    ShapeError,
)

# Below this truncation mass the inverse-CDF route is used; above it,
# rejection from the untruncated sampler is cheaper (expected <= 5 tries).
_REJECTION_MASS = 0.2
_MIN_TRUNCATION_MASS = 1e-300

_ONE_BELOW_1 = np.nextafter(1.0, 0.0)
_TINY = np.finfo(np.float64).tiny


class RandomSource:
    """Deterministic random stream keyed by ``(seed, stream)``.

    A single source must not be shared across threads; derive one stream
    per concurrent consumer with :meth:`split`.
    """

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or seed > 0xFFFFFFFFFFFFFFFF:
            raise ParameterDomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if stream < 0 or stream > 0xFFFFFFFFFFFFFFFF:
            raise ParameterDomainError(f"stream must be a 64-bit unsigned integer, got {stream}")
        self.seed = int(seed)
        self.stream = int(stream)
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def split(self, stream: int) -> "RandomSource":
        """Return an independent source for the same seed on another stream."""
        return RandomSource(self.seed, stream)

    # Plumbing draws used by the samplers; named distributions live in the
    # module-level functions below.
    def uniform(self, size=None, low=0.0, high=1.0):
        return self.generator.uniform(low, high, size=size)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size=size)

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, stream={self.stream})"


def _check_positive(name: str, value) -> None:
    if not np.all(np.isfinite(value)) or not np.all(np.asarray(value) > 0):
        raise ParameterDomainError(f"{name} must be strictly positive and finite, got {value!r}")


def sample_gamma(shape: float, rate: float, src: RandomSource, size=None):
    """Draw from Gamma(shape, rate); mean is shape/rate."""
    _check_positive("shape", shape)
    _check_positive("rate", rate)
    return src.generator.gamma(shape, scale=1.0 / rate, size=size)


def sample_inv_gamma(a: float, b: float, src: RandomSource, size=None):
    """Draw X with 1/X ~ Gamma(a, b); mean is b/(a-1) for a > 1."""
    _check_positive("a", a)
    _check_positive("b", b)
    return 1.0 / src.generator.gamma(a, scale=1.0 / b, size=size)


def sample_beta(a: float, b: float, src: RandomSource, size=None):
    """Draw from Beta(a, b)."""
    _check_positive("a", a)
    _check_positive("b", b)
    return src.generator.beta(a, b, size=size)


def sample_dirichlet(concentration, src: RandomSource):
    """Draw a probability vector from Dirichlet(concentration)."""
    conc = np.asarray(concentration, dtype=np.float64)
    if conc.ndim != 1 or conc.size < 2:
        raise ParameterDomainError(
            f"concentration must be a vector of length >= 2, got shape {conc.shape}"
        )
    _check_positive("concentration", conc)
    return src.generator.dirichlet(conc)


def trunc_inv_gamma_01_mass(a: float, b: float) -> float:
    """P(X <= 1) for X ~ Inv-Gamma(a, b): the mass kept by truncation to (0, 1)."""
    return float(special.gammaincc(a, b))


def sample_trunc_inv_gamma_01(a: float, b: float, src: RandomSource, size=None):
    """Draw from Inv-Gamma(a, b) conditioned on the open interval (0, 1).

    Uses inverse-CDF on the Gamma tail (Y = 1/X ~ Gamma(a, rate=b)
    restricted to Y > 1); falls back to rejection from the untruncated
    sampler when the truncation keeps more than 20% of the mass. Draws
    are clipped into the open interval so 0.0 and 1.0 never occur.
    """
    _check_positive("a", a)
    _check_positive("b", b)
    mass = trunc_inv_gamma_01_mass(a, b)
    if mass < _MIN_TRUNCATION_MASS:
        raise DegenerateTruncationError(
            f"Inv-Gamma({a}, {b}) has numerically zero mass on (0, 1): {mass!r}"
        )
    scalar = size is None
    n = 1 if scalar else int(np.prod(size))
    out = _trunc_inv_gamma_01_draws(a, b, mass, n, src)
    if scalar:
        return float(out[0])
    return out.reshape(size)


def _trunc_inv_gamma_01_draws(a, b, mass, n, src):
    if mass > _REJECTION_MASS:
        out = np.empty(n)
        filled = 0
        while filled < n:
            cand = 1.0 / src.generator.gamma(a, scale=1.0 / b, size=n - filled)
            cand = cand[(cand > 0.0) & (cand < 1.0)]
            out[filled:filled + cand.size] = cand
            filled += cand.size
    else:
        # Inverse survival function stays in the well-conditioned upper
        # Gamma tail for arbitrarily small truncation mass.
        v = src.uniform(size=n)
        y = special.gammainccinv(a, mass * (1.0 - v)) / b
        out = 1.0 / y
    return np.clip(out, _TINY, _ONE_BELOW_1)


def trunc_inv_gamma_01_half(theta: float, src: RandomSource, size=None):
    """Shape-1/2 truncated inverse-Gamma draw that never degenerates.

    Identical law to ``sample_trunc_inv_gamma_01(0.5, theta, ...)`` but,
    when the truncation mass underflows, switches to an exact rejection
    sampler on the Gamma tail: propose y = 1 + Exp(rate=theta) and accept
    with probability y^(-1/2) <= 1, returning 1/y. Needed by conditional
    updates whose proposal must exist for every reachable parameter value.
    """
    _check_positive("theta", theta)
    scalar = size is None
    n = 1 if scalar else int(np.prod(size))
    mass = trunc_inv_gamma_01_mass(0.5, theta)
    if mass >= _MIN_TRUNCATION_MASS:
        out = _trunc_inv_gamma_01_draws(0.5, theta, mass, n, src)
    else:
        out = np.empty(n)
        filled = 0
        while filled < n:
            m = n - filled
            y = 1.0 + src.generator.exponential(scale=1.0 / theta, size=m)
            keep = src.uniform(size=m) < 1.0 / np.sqrt(y)
            cand = np.clip(1.0 / y[keep], _TINY, _ONE_BELOW_1)
            out[filled:filled + cand.size] = cand
            filled += cand.size
    if scalar:
        return float(out[0])
    return out.reshape(size)


def trunc_inv_gamma_01_logpdf(x, a: float, b: float):
    """Log density of Inv-Gamma(a, b) truncated to (0, 1), at x in (0, 1)."""
    mass = trunc_inv_gamma_01_mass(a, b)
    if mass < _MIN_TRUNCATION_MASS:
        raise DegenerateTruncationError(
            f"Inv-Gamma({a}, {b}) has numerically zero mass on (0, 1)"
        )
    x = np.asarray(x, dtype=np.float64)
    return (
        a * math.log(b)
        - math.lgamma(a)
        - (a + 1.0) * np.log(x)
        - b / x
        - math.log(mass)
    )


def sample_mvn_precision(mean, precision, src: RandomSource):
    """Draw a Gaussian vector with the given mean and covariance = precision^-1.

    The precision matrix must be symmetric (within 1e-10 relative to its
    largest entry) and positive definite; a failed Cholesky factorization
    raises with the 1-based index of the offending leading minor.
    """
    mean = np.asarray(mean, dtype=np.float64)
    precision = np.asarray(precision, dtype=np.float64)
    p = mean.shape[0]
    if precision.shape != (p, p):
        raise ShapeError(f"precision shape {precision.shape} does not match mean length {p}")
    scale = max(1.0, float(np.max(np.abs(precision))))
    if np.max(np.abs(precision - precision.T)) > 1e-10 * scale:
        raise ParameterDomainError("precision matrix is not symmetric within 1e-10")
    chol, info = lapack.dpotrf(precision, lower=1)
    if info != 0:
        raise NonPositiveDefiniteError(
            f"precision is not positive definite (leading minor {info})", minor=int(info)
        )
    # x = mean + L^-T eps has covariance (L L^T)^-1 = precision^-1.
    eps = src.standard_normal(p)
    return mean + solve_triangular(chol, eps, lower=True, trans="T")


def mvn_precision_moments(b, precision):
    """Mean P^-1 b and covariance P^-1 of the canonical Gaussian N(P^-1 b, P^-1)."""
    precision = np.asarray(precision, dtype=np.float64)
    chol, info = lapack.dpotrf(precision, lower=1)
    if info != 0:
        raise NonPositiveDefiniteError(
            f"precision is not positive definite (leading minor {info})", minor=int(info)
        )
    mean = cho_solve((chol, True), np.asarray(b, dtype=np.float64))
    cov = cho_solve((chol, True), np.eye(precision.shape[0]))
    return mean, cov


def normal_cdf(x):
    """Standard Gaussian CDF.

    The far left tail is computed as exp(log CDF): the direct route
    flushes subnormal results to zero around x = -38, losing strict
    positivity where the value is still representable.
    """
    x = np.asarray(x, dtype=np.float64)
    out = special.ndtr(x)
    tail = x < -37.0
    if np.any(tail):
        out = np.where(tail, np.exp(special.log_ndtr(x)), out)
    if out.ndim == 0:
        return float(out)
    return out


def normal_logcdf(x):
    """log of the standard Gaussian CDF; finite far into the left tail."""
    return special.log_ndtr(x)


def normal_logpdf(x, mean, var):
    """Log density of N(mean, var) evaluated elementwise."""
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)


def gamma_logpdf(x, shape: float, rate: float):
    """Log density of Gamma(shape, rate)."""
    return (
        shape * math.log(rate)
        - math.lgamma(shape)
        + (shape - 1.0) * np.log(x)
        - rate * x
    )


def inv_gamma_logpdf(x, a: float, b: float):
    """Log density of Inv-Gamma(a, b)."""
    return a * math.log(b) - math.lgamma(a) - (a + 1.0) * np.log(x) - b / x


def log_erfc_sqrt(theta):
    """log(erfc(sqrt(theta))) without underflow for large theta.

    This is the log truncation mass of Inv-Gamma(1/2, theta) on (0, 1);
    erfcx keeps it finite far beyond where erfc underflows.
    """
    s = np.sqrt(theta)
    return np.log(special.erfcx(s)) - theta
