"""Domain types for data, hyperparameters, and the latent state of the
mixture hierarchy, plus dataset preparation (logit transform, feature
standardization, stick-breaking weights, chain initialization).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import special

from . import rngdist
from .errors import ParameterDomainError, ResponseDomainError, ShapeError
from .rngdist import RandomSource

RAW_SCORE = "raw_score"
PROBABILITY = "probability"
LOGIT_TRANSFORMED = "logit_transformed"
_RESPONSE_KINDS = (RAW_SCORE, PROBABILITY, LOGIT_TRANSFORMED)

# Saturated classifier probabilities are clipped to [EPS, 1-EPS] before
# the logit when the caller opts in; exact 0/1 occur in practice.
SATURATION_EPS = 1e-6

_SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class Dataset:
    """Sample matrix with black-box responses for one target class.

    Rows of ``X`` are samples, columns are features; ``y`` holds the
    black-box output for each row. Probability responses must pass
    through :func:`logit_transform` before fitting.
    """

    X: np.ndarray
    y: np.ndarray
    class_id: str = "0"
    response_kind: str = RAW_SCORE
    feature_names: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ShapeError(f"X must be a non-empty 2-D matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ShapeError(f"y length {y.shape} does not match {X.shape[0]} rows of X")
        if not np.all(np.isfinite(X)):
            raise ParameterDomainError("X contains non-finite entries")
        if not np.all(np.isfinite(y)):
            raise ParameterDomainError("y contains non-finite entries")
        if self.response_kind not in _RESPONSE_KINDS:
            raise ParameterDomainError(f"unknown response_kind {self.response_kind!r}")
        if self.response_kind == PROBABILITY and (np.any(y < 0.0) or np.any(y > 1.0)):
            row = int(np.argmax((y < 0.0) | (y > 1.0)))
            raise ResponseDomainError(
                f"probability response outside [0, 1] at row {row}: {y[row]}", row=row
            )
        if self.feature_names is not None:
            names = tuple(str(n) for n in self.feature_names)
            if len(names) != X.shape[1]:
                raise ShapeError(
                    f"{len(names)} feature names for {X.shape[1]} columns"
                )
            object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def fit_ready(self) -> bool:
        return self.response_kind in (RAW_SCORE, LOGIT_TRANSFORMED)


@dataclass(frozen=True)
class Hyperparameters:
    """Fixed constants of the hierarchy plus the sampler schedule.

    ``J`` truncates the mixture, ``K`` counts elastic-net prior states.
    ``(a, b)`` parameterize the inverse-Gamma prior on component noise
    variances, ``(e, f)`` the Gamma prior on the stick concentration, and
    ``(R, L, V)`` the Gamma priors Gamma(R, V/2) / Gamma(L, V/2) on the
    lasso and ridge penalties of each prior state.
    """

    J: int = 20
    K: int = 3
    a: float = 2.0
    b: float = 1.0
    e: float = 1.0
    f: float = 1.0
    R: float = 1.0
    L: float = 1.0
    V: float = 2.0
    n_iter: int = 2000
    burn_in: int = 1000
    thin: int = 1
    mh_step_lambda: float = 0.25
    mh_step_sigma: float = 0.25

    def __post_init__(self):
        if self.J < 2:
            raise ParameterDomainError(f"J must be >= 2, got {self.J}")
        if self.K < 1:
            raise ParameterDomainError(f"K must be >= 1, got {self.K}")
        for name in ("a", "b", "e", "f", "R", "L", "V", "mh_step_lambda", "mh_step_sigma"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ParameterDomainError(f"{name} must be strictly positive, got {value}")
        if self.n_iter < 1 or self.burn_in < 0 or self.burn_in >= self.n_iter:
            raise ParameterDomainError(
                f"need 0 <= burn_in < n_iter, got burn_in={self.burn_in} n_iter={self.n_iter}"
            )
        if self.thin < 1:
            raise ParameterDomainError(f"thin must be >= 1, got {self.thin}")

    @property
    def n_draws(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin


@dataclass(frozen=True)
class ChainState:
    """One full assignment of every latent quantity in the hierarchy."""

    u: np.ndarray        # (J-1,) stick fractions in (0, 1)
    pi: np.ndarray       # (J,) mixture weights
    alpha: float         # stick concentration
    beta: np.ndarray     # (J, p) regression coefficients
    sigma2: np.ndarray   # (J,) noise variances
    tau: np.ndarray      # (J, p) scale-mixture latents in (0, 1)
    z: np.ndarray        # (n,) sample -> component indicators, 0-based
    c: np.ndarray        # (J,) component -> prior-state indicators, 0-based
    w: np.ndarray        # (K,) prior-state weights
    lambda1: np.ndarray  # (K,) lasso penalties
    lambda2: np.ndarray  # (K,) ridge penalties

    @property
    def J(self) -> int:
        return self.pi.shape[0]

    @property
    def K(self) -> int:
        return self.w.shape[0]

    @property
    def p(self) -> int:
        return self.beta.shape[1]

    @property
    def n(self) -> int:
        return self.z.shape[0]

    def validate(self) -> None:
        """Raise if any structural invariant is violated."""
        J, K, p = self.J, self.K, self.p
        if self.u.shape != (J - 1,):
            raise ShapeError(f"u shape {self.u.shape}, expected ({J - 1},)")
        if self.beta.shape != (J, p) or self.tau.shape != (J, p):
            raise ShapeError("beta/tau shapes disagree with (J, p)")
        if self.sigma2.shape != (J,) or self.c.shape != (J,):
            raise ShapeError("sigma2/c must have one entry per component")
        for name in ("u", "pi", "beta", "sigma2", "tau", "w", "lambda1", "lambda2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ParameterDomainError(f"{name} contains non-finite entries")
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise ParameterDomainError(f"alpha must be positive, got {self.alpha}")
        if np.any(self.u <= 0.0) or np.any(self.u >= 1.0):
            raise ParameterDomainError("u entries must lie strictly inside (0, 1)")
        if np.any(self.tau <= 0.0) or np.any(self.tau >= 1.0):
            raise ParameterDomainError("tau entries must lie strictly inside (0, 1)")
        for name in ("sigma2", "lambda1", "lambda2"):
            if np.any(getattr(self, name) <= 0.0):
                raise ParameterDomainError(f"{name} entries must be strictly positive")
        if abs(self.pi.sum() - 1.0) > _SIMPLEX_TOL or np.any(self.pi < 0.0):
            raise ParameterDomainError("pi is not a probability vector")
        if abs(self.w.sum() - 1.0) > _SIMPLEX_TOL or np.any(self.w < 0.0):
            raise ParameterDomainError("w is not a probability vector")
        if np.max(np.abs(self.pi - stick_breaking(self.u))) > _SIMPLEX_TOL:
            raise ParameterDomainError("pi does not reproduce stick_breaking(u)")
        if self.z.min() < 0 or self.z.max() >= J:
            raise ParameterDomainError("z contains out-of-range component indices")
        if self.c.min() < 0 or self.c.max() >= K:
            raise ParameterDomainError("c contains out-of-range prior-state indices")


@dataclass(frozen=True)
class PosteriorChain:
    """Post-burn-in, thinned draws with consistent dimensions.

    ``logliks`` stores the mixture log likelihood of each retained draw
    (computed at retention time) so relabeling can pick its reference
    without re-reading the data. ``n_chains > 1`` marks a pooled chain
    assembled from several independently run chains.
    """

    draws: tuple[ChainState, ...]
    hyper: Hyperparameters
    seed: int
    class_id: str = "0"
    relabeled: bool = False
    logliks: tuple[float, ...] = ()
    n_chains: int = 1

    def __post_init__(self):
        draws = tuple(self.draws)
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "logliks", tuple(float(v) for v in self.logliks))
        if self.n_chains < 1:
            raise ParameterDomainError("n_chains must be >= 1")
        expected = self.n_chains * self.hyper.n_draws
        if len(draws) != expected:
            raise ShapeError(
                f"chain holds {len(draws)} draws, schedule implies {expected}"
            )
        if self.logliks and len(self.logliks) != len(draws):
            raise ShapeError("logliks length does not match draws")
        if draws:
            J, K, p = draws[0].J, draws[0].K, draws[0].p
            for d in draws:
                if (d.J, d.K, d.p) != (J, K, p):
                    raise ShapeError("draws disagree on (J, K, p) dimensions")

    def __len__(self) -> int:
        return len(self.draws)


def logit_transform(dataset: Dataset, clip_saturated: bool = False) -> Dataset:
    """Map probability responses through log(y / (1 - y)).

    Strict by default: any response outside the open interval (0, 1)
    raises, naming the first offending row. With ``clip_saturated=True``
    responses equal to exactly 0 or 1 are clipped to [1e-6, 1 - 1e-6]
    first and counted in a warning; values outside [0, 1] still raise.
    """
    if dataset.response_kind != PROBABILITY:
        raise ResponseDomainError(
            f"logit transform requires probability responses, got {dataset.response_kind!r}"
        )
    y = dataset.y
    if clip_saturated:
        saturated = (y <= 0.0) | (y >= 1.0)
        n_sat = int(saturated.sum())
        if n_sat:
            warnings.warn(
                f"clipped {n_sat} saturated probability response(s) to"
                f" [{SATURATION_EPS}, {1 - SATURATION_EPS}]",
                stacklevel=2,
            )
            y = np.clip(y, SATURATION_EPS, 1.0 - SATURATION_EPS)
    bad = (y <= 0.0) | (y >= 1.0)
    if np.any(bad):
        row = int(np.argmax(bad))
        raise ResponseDomainError(
            f"response at row {row} is {dataset.y[row]}, outside the open interval (0, 1)",
            row=row,
        )
    return replace(dataset, y=np.log(y / (1.0 - y)), response_kind=LOGIT_TRANSFORMED)


def inverse_logit(values):
    """Inverse of the logit map; exposed for round-trip checks and reporting."""
    return special.expit(np.asarray(values, dtype=np.float64))


def stick_breaking(u: np.ndarray) -> np.ndarray:
    """Map J-1 stick fractions in (0, 1) to J mixture weights.

    The first weight is ``u[0]``, each following weight is its fraction
    of the remaining stick, and the last weight is the leftover mass.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1:
        raise ShapeError(f"u must be a vector, got shape {u.shape}")
    if np.any(u <= 0.0) or np.any(u >= 1.0) or not np.all(np.isfinite(u)):
        raise ParameterDomainError("stick fractions must lie strictly inside (0, 1)")
    J = u.shape[0] + 1
    pi = np.empty(J)
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - u)))
    pi[:-1] = u * remaining[:-1]
    pi[-1] = max(0.0, 1.0 - pi[:-1].sum())
    return pi


def sticks_from_weights(pi: np.ndarray) -> np.ndarray:
    """Recover stick fractions from mixture weights (inverse of stick_breaking).

    Entries where the remaining stick mass is already zero are arbitrary;
    they are set to 0.5. Results are clipped into the open interval so a
    reconstructed state keeps its invariants.
    """
    pi = np.asarray(pi, dtype=np.float64)
    J = pi.shape[0]
    u = np.empty(J - 1)
    remaining = 1.0
    for j in range(J - 1):
        u[j] = pi[j] / remaining if remaining > 0.0 else 0.5
        remaining -= pi[j]
    eps = np.finfo(np.float64).tiny
    return np.clip(u, eps, np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class Standardization:
    """Per-feature affine transform applied before fitting.

    Constant columns are left untouched (mean 0, scale 1) and flagged.
    ``response_offset`` is the response mean removed before fitting; the
    model has no intercept, so predictions add it back.
    """

    feature_mean: np.ndarray
    feature_scale: np.ndarray
    constant_mask: np.ndarray
    response_offset: float

    @classmethod
    def identity(cls, p: int) -> "Standardization":
        return cls(np.zeros(p), np.ones(p), np.zeros(p, dtype=bool), 0.0)


def standardize_features(dataset: Dataset) -> tuple[Dataset, Standardization]:
    """Center/scale features and center the response; returns the recipe.

    Elastic-net penalties are scale-sensitive, so columns are brought to
    zero mean and unit variance before fitting and the recipe is stored
    for de-standardizing coefficients afterwards.
    """
    X = dataset.X
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    constant = scale == 0.0
    mean = np.where(constant, 0.0, mean)
    scale = np.where(constant, 1.0, scale)
    offset = float(dataset.y.mean())
    std = Standardization(mean, scale, constant, offset)
    transformed = replace(dataset, X=(X - mean) / scale, y=dataset.y - offset)
    return transformed, std


def _quantile_bins(y: np.ndarray, J: int) -> np.ndarray:
    """Assign each response to one of J equal-count bins by rank."""
    order = np.argsort(y, kind="stable")
    z = np.empty(y.shape[0], dtype=np.int64)
    z[order] = (np.arange(y.shape[0]) * J) // y.shape[0]
    return z


def _ridge_lstsq(X: np.ndarray, y: np.ndarray, damping: float = 1e-6) -> np.ndarray:
    p = X.shape[1]
    return np.linalg.solve(X.T @ X + damping * np.eye(p), X.T @ y)


def init_state(data: Dataset, hyper: Hyperparameters, src: RandomSource) -> ChainState:
    """Build a valid starting state.

    Indicators z come from response-quantile binning into J groups and
    coefficients from per-group ridge-damped least squares; every other
    latent is drawn from its prior. With fewer samples than components
    the binning degenerates to a single group (warning, not an error).
    """
    J, K, p, n = hyper.J, hyper.K, data.p, data.n

    alpha = float(rngdist.sample_gamma(hyper.e, hyper.f, src))
    u = np.clip(
        rngdist.sample_beta(1.0, alpha, src, size=J - 1),
        np.finfo(np.float64).tiny,
        np.nextafter(1.0, 0.0),
    )
    pi = stick_breaking(u)
    w = (
        rngdist.sample_dirichlet(np.full(K, 1.0 / K), src)
        if K > 1
        else np.ones(1)
    )
    with np.errstate(divide="ignore"):
        c = _sample_categorical_rows(np.log(np.tile(w, (J, 1))), src)
    lambda1 = np.atleast_1d(rngdist.sample_gamma(hyper.R, hyper.V / 2.0, src, size=K))
    lambda2 = np.atleast_1d(rngdist.sample_gamma(hyper.L, hyper.V / 2.0, src, size=K))
    sigma2 = np.atleast_1d(rngdist.sample_inv_gamma(hyper.a, hyper.b, src, size=J))

    tau = np.empty((J, p))
    for j in range(J):
        theta = lambda1[c[j]] ** 2 / (8.0 * sigma2[j] * lambda2[c[j]])
        tau[j] = rngdist.sample_trunc_inv_gamma_01(0.5, theta, src, size=p)

    if n < J:
        warnings.warn(
            f"n={n} samples for J={J} components; initializing all samples"
            " in one component",
            stacklevel=2,
        )
        z = np.zeros(n, dtype=np.int64)
    else:
        z = _quantile_bins(data.y, J)

    beta = np.empty((J, p))
    for j in range(J):
        rows = z == j
        if rows.any():
            beta[j] = _ridge_lstsq(data.X[rows], data.y[rows])
        else:
            sd = np.sqrt(sigma2[j] * (1.0 - tau[j]) / lambda2[c[j]])
            beta[j] = sd * src.standard_normal(p)

    state = ChainState(
        u=u, pi=pi, alpha=alpha, beta=beta, sigma2=sigma2, tau=tau,
        z=z, c=c, w=w, lambda1=lambda1, lambda2=lambda2,
    )
    state.validate()
    return state


def _sample_categorical_rows(log_weights: np.ndarray, src: RandomSource) -> np.ndarray:
    """Draw one category per row of a matrix of (unnormalized) log weights.

    Each row must contain at least one finite entry (callers check).
    """
    shifted = log_weights - log_weights.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    cum = np.cumsum(probs, axis=1)
    draws = src.uniform(size=log_weights.shape[0]) * cum[:, -1]
    idx = (cum < draws[:, None]).sum(axis=1)
    return np.minimum(idx, log_weights.shape[1] - 1).astype(np.int64)
