"""Everything done with a fitted surrogate: prediction, approximation
error, local explanations, global per-class patterns, pattern
similarity, and pathological-sample mask generation.

Coefficient summaries are reported in original feature units; the
standardization applied at fit time is inverted once, here, so every
downstream consumer sees interpretable weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from . import rngdist
from .errors import (
    EmptyMaskError,
    EmptyModelError,
    ParameterDomainError,
    ResponseDomainError,
    ShapeError,
)
from .model import (
    Dataset,
    Hyperparameters,
    PosteriorChain,
    Standardization,
    standardize_features,
)
from .relabel import relabel_chain
from .rngdist import RandomSource
from .sampler import run_chain

# Components below this share of the data are vacuous and excluded from
# global patterns.
OCCUPANCY_FLOOR_FRACTION = 0.01


@dataclass(frozen=True)
class SurrogateModel:
    """Posterior-mean view of a relabeled chain.

    ``beta_mean`` holds de-standardized coefficients (original feature
    units); predictions add the per-component intercept implied by the
    standardization recipe, so the model is used directly on raw inputs.
    """

    chain: PosteriorChain
    beta_mean: np.ndarray       # (J, p), de-standardized
    sigma2_mean: np.ndarray     # (J,)
    pi_mean: np.ndarray         # (J,)
    occupancy: np.ndarray       # (J,) mean assignment counts, sums to n
    standardization: Standardization
    feature_names: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if not self.chain.relabeled:
            raise ParameterDomainError("surrogate requires a relabeled chain")
        J, p = self.chain.draws[0].J, self.chain.draws[0].p
        if self.beta_mean.shape != (J, p):
            raise ShapeError(
                f"beta_mean shape {self.beta_mean.shape} disagrees with chain ({J}, {p})"
            )
        n = self.chain.draws[0].n
        if abs(float(self.occupancy.sum()) - n) > 1e-6:
            raise ShapeError(
                f"occupancy sums to {self.occupancy.sum()}, expected {n}"
            )

    @property
    def J(self) -> int:
        return self.beta_mean.shape[0]

    @property
    def p(self) -> int:
        return self.beta_mean.shape[1]

    @property
    def intercepts(self) -> np.ndarray:
        """Per-component intercepts from the standardization recipe."""
        std = self.standardization
        return std.response_offset - self.beta_mean @ std.feature_mean


@dataclass(frozen=True)
class Explanation:
    """Ranked feature importances for one sample's approximating component."""

    component: int
    assignment_confidence: float
    ranked_features: tuple[tuple[int, Optional[str], float], ...]
    truncated: bool = False
    sample_index: Optional[int] = None
    sample: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Pattern:
    """Per-component importance map: what the surrogate attends to."""

    component: int
    weights: np.ndarray   # (p,) de-standardized posterior-mean coefficients
    support: np.ndarray   # sorted indices of the top_k largest |weights|
    energy: np.ndarray    # |weights| normalized to max 1 (zeros if all zero)


def fit_surrogate(data: Dataset, hyper: Hyperparameters, seed: int,
                  n_chains: int = 1, stream_base: int = 0,
                  adapt_during_burnin: bool = False) -> SurrogateModel:
    """Standardize, run the chain(s), relabel, and summarize.

    Multiple chains run on separate streams of the same seed; chains
    after the first are relabeled against the first chain's reference
    and all retained draws are pooled. Deterministic given
    (seed, stream_base, n_chains).
    """
    if not data.fit_ready:
        raise ResponseDomainError(
            "dataset responses are probabilities; apply logit_transform before fitting"
        )
    if n_chains < 1:
        raise ParameterDomainError("n_chains must be >= 1")
    std_data, standardization = standardize_features(data)

    relabeled = []
    reference = None
    for ci in range(n_chains):
        chain, _ = run_chain(
            std_data, hyper, seed, stream=stream_base + ci,
            adapt_during_burnin=adapt_during_burnin,
        )
        aligned, info = relabel_chain(chain, reference=reference)
        if reference is None:
            reference = info
        relabeled.append(aligned)

    if n_chains == 1:
        pooled = relabeled[0]
    else:
        draws = tuple(d for ch in relabeled for d in ch.draws)
        logliks = tuple(v for ch in relabeled for v in ch.logliks)
        pooled = PosteriorChain(
            draws=draws, hyper=hyper, seed=seed, class_id=data.class_id,
            relabeled=True, logliks=logliks, n_chains=n_chains,
        )
    return summarize_chain(pooled, standardization, data.feature_names)


def summarize_chain(chain: PosteriorChain, standardization: Standardization,
                    feature_names: Optional[Sequence[str]] = None) -> SurrogateModel:
    """Posterior-mean summaries of a relabeled chain, in original units."""
    draws = chain.draws
    J = draws[0].J
    beta_std = np.mean([d.beta for d in draws], axis=0)
    sigma2_mean = np.mean([d.sigma2 for d in draws], axis=0)
    pi_mean = np.mean([d.pi for d in draws], axis=0)
    occupancy = np.mean(
        [np.bincount(d.z, minlength=J) for d in draws], axis=0
    ).astype(np.float64)
    beta_mean = beta_std / standardization.feature_scale[None, :]
    return SurrogateModel(
        chain=chain,
        beta_mean=beta_mean,
        sigma2_mean=sigma2_mean,
        pi_mean=pi_mean,
        occupancy=occupancy,
        standardization=standardization,
        feature_names=tuple(feature_names) if feature_names is not None else None,
    )


def _check_sample(model: SurrogateModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.p,):
        raise ShapeError(f"sample shape {x.shape} does not match p={model.p}")
    if not np.all(np.isfinite(x)):
        raise ParameterDomainError("sample contains non-finite entries")
    return x


def component_predictions(model: SurrogateModel, X) -> np.ndarray:
    """Per-component predictions for rows of X; shape (n, J)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.p:
        raise ShapeError(f"feature count {X.shape[1]} does not match p={model.p}")
    return X @ model.beta_mean.T + model.intercepts[None, :]


def predict(model: SurrogateModel, x, mode: str = "mixture",
            response: Optional[float] = None) -> float:
    """Posterior-mean prediction at one sample.

    ``mixture`` returns the weight-averaged prediction; ``mode`` returns
    the prediction of the single most probable component for the sample,
    anchored at ``response`` when supplied (else at the mixture
    prediction).
    """
    x = _check_sample(model, x)
    preds = component_predictions(model, x[None, :])[0]
    if mode == "mixture":
        return float(model.pi_mean @ preds)
    if mode == "mode":
        anchor = float(model.pi_mean @ preds) if response is None else float(response)
        j = int(np.argmax(_log_responsibilities(model, preds, anchor)))
        return float(preds[j])
    raise ParameterDomainError(f"unknown prediction mode {mode!r}")


def _log_responsibilities(model: SurrogateModel, preds: np.ndarray,
                          anchor: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(model.pi_mean) + rngdist.normal_logpdf(
            anchor, preds, model.sigma2_mean
        )


def assign_components(model: SurrogateModel, X, y) -> tuple[np.ndarray, np.ndarray]:
    """Most probable component per row, anchored at the given responses.

    Returns (assignments, confidences) where confidence is the
    normalized categorical weight of the chosen component.
    """
    preds = component_predictions(model, X)
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    with np.errstate(divide="ignore"):
        logr = np.log(model.pi_mean)[None, :] + rngdist.normal_logpdf(
            y[:, None], preds, model.sigma2_mean[None, :]
        )
    assignments = np.argmax(logr, axis=1)
    norm = logsumexp(logr, axis=1)
    confidences = np.exp(logr[np.arange(len(y)), assignments] - norm)
    return assignments.astype(np.int64), confidences


def rmse(model: SurrogateModel, data: Dataset) -> float:
    """Root mean squared approximation error over a dataset.

    Each sample is scored by its approximating component (the most
    probable one given the observed response), matching how the
    surrogate explains individual predictions. Residuals are squared
    before averaging.
    """
    if data.p != model.p:
        raise ShapeError(f"dataset has p={data.p}, model has p={model.p}")
    preds = component_predictions(model, data.X)
    assignments, _ = assign_components(model, data.X, data.y)
    approx = preds[np.arange(data.n), assignments]
    return float(np.sqrt(np.mean((data.y - approx) ** 2)))


def local_explanation(model: SurrogateModel, x, top_k: int,
                      response: Optional[float] = None,
                      importance: str = "coefficient",
                      per_draw_vote: bool = False,
                      sample_index: Optional[int] = None) -> Explanation:
    """Explain one sample: pick its approximating component and rank the
    features present in the input by importance.

    The component is the most probable one for the sample, anchored at
    the black-box response when supplied (the normal case) and at the
    surrogate's own mixture prediction otherwise. Importance defaults to
    |coefficient| over features with nonzero input value;
    ``importance="contribution"`` ranks by |coefficient * value|
    instead. ``per_draw_vote`` assigns by majority vote across retained
    draws (diagnostic mode); confidence is then the vote share.
    """
    if top_k < 1:
        raise ParameterDomainError(f"top_k must be positive, got {top_k}")
    if importance not in ("coefficient", "contribution"):
        raise ParameterDomainError(f"unknown importance rule {importance!r}")
    x = _check_sample(model, x)
    preds = component_predictions(model, x[None, :])[0]
    anchor = float(model.pi_mean @ preds) if response is None else float(response)

    if per_draw_vote:
        votes = np.zeros(model.J, dtype=np.int64)
        std = model.standardization
        x_std = (x - std.feature_mean) / std.feature_scale
        for draw in model.chain.draws:
            dpreds = draw.beta @ x_std + std.response_offset
            with np.errstate(divide="ignore"):
                logr = np.log(draw.pi) + rngdist.normal_logpdf(
                    anchor, dpreds, draw.sigma2
                )
            votes[int(np.argmax(logr))] += 1
        j = int(np.argmax(votes))
        confidence = float(votes[j] / len(model.chain.draws))
    else:
        logr = _log_responsibilities(model, preds, anchor)
        j = int(np.argmax(logr))
        confidence = float(np.exp(logr[j] - logsumexp(logr)))

    present = np.flatnonzero(x != 0.0)
    weights = model.beta_mean[j]
    scores = np.abs(weights[present])
    if importance == "contribution":
        scores = np.abs(weights[present] * x[present])
    order = present[np.argsort(-scores, kind="stable")]
    truncated = top_k > order.size
    chosen = order[: min(top_k, order.size)]

    names = model.feature_names
    ranked = tuple(
        (
            int(l),
            names[l] if names is not None else None,
            float(weights[l] * x[l]) if importance == "contribution" else float(weights[l]),
        )
        for l in chosen
    )
    return Explanation(
        component=j,
        assignment_confidence=confidence,
        ranked_features=ranked,
        truncated=truncated,
        sample_index=sample_index,
        sample=x,
    )


def _pattern_for(model: SurrogateModel, j: int, top_k: int) -> Pattern:
    weights = model.beta_mean[j].copy()
    magnitude = np.abs(weights)
    peak = magnitude.max()
    energy = magnitude / peak if peak > 0.0 else np.zeros_like(magnitude)
    k = min(top_k, model.p)
    order = np.argsort(-magnitude, kind="stable")
    support = np.sort(order[:k])
    return Pattern(component=j, weights=weights, support=support, energy=energy)


def global_patterns(model: SurrogateModel, top_k: int,
                    occupancy_floor: Optional[float] = None) -> list[Pattern]:
    """One pattern per occupied component, in descending weight order.

    Components holding less than ``occupancy_floor`` samples (default 1%
    of n) are treated as vacuous.
    """
    if top_k < 1:
        raise ParameterDomainError(f"top_k must be positive, got {top_k}")
    n = float(model.occupancy.sum())
    if occupancy_floor is None:
        occupancy_floor = OCCUPANCY_FLOOR_FRACTION * n
    keep = np.flatnonzero(model.occupancy >= occupancy_floor)
    if keep.size == 0:
        raise EmptyModelError(
            f"no component reaches the occupancy floor {occupancy_floor}"
        )
    ordered = keep[np.argsort(-model.pi_mean[keep], kind="stable")]
    return [_pattern_for(model, int(j), top_k) for j in ordered]


def pattern_similarity(a: Pattern, b: Pattern) -> float:
    """Cosine similarity of two energy maps; 0 when either is all zero."""
    if a.energy.shape != b.energy.shape:
        raise ShapeError(
            f"patterns have different dimensions: {a.energy.shape} vs {b.energy.shape}"
        )
    na = float(np.linalg.norm(a.energy))
    nb = float(np.linalg.norm(b.energy))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a.energy @ b.energy / (na * nb))


def craft_pathological(pattern: Pattern, base, energy_threshold: float,
                       value_range: tuple[float, float], src: RandomSource) -> np.ndarray:
    """Randomize the high-energy coordinates of a base sample.

    Every index whose energy reaches the threshold is replaced by an
    independent uniform draw in [lo, hi]; the complement of the mask is
    returned bit-identical to the base.
    """
    base = np.asarray(base, dtype=np.float64)
    if base.shape != pattern.energy.shape:
        raise ShapeError(
            f"base shape {base.shape} does not match pattern dimension {pattern.energy.shape}"
        )
    if not (0.0 < energy_threshold <= 1.0):
        raise ParameterDomainError(
            f"energy_threshold must lie in (0, 1], got {energy_threshold}"
        )
    lo, hi = value_range
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ParameterDomainError(f"need lo < hi, got ({lo}, {hi})")
    mask = pattern.energy >= energy_threshold
    if not mask.any():
        raise EmptyMaskError(
            f"no index has energy >= {energy_threshold} (max is {pattern.energy.max()})"
        )
    crafted = base.copy()
    crafted[mask] = src.uniform(size=int(mask.sum()), low=lo, high=hi)
    return crafted


def export_heatmap(pattern: Pattern, shape: tuple[int, int]) -> np.ndarray:
    """Row-major reshape of the energy vector into a (rows, cols) matrix."""
    rows, cols = int(shape[0]), int(shape[1])
    if rows < 1 or cols < 1 or rows * cols != pattern.energy.shape[0]:
        raise ShapeError(
            f"shape {rows}x{cols} does not tile {pattern.energy.shape[0]} features"
        )
    return pattern.energy.reshape(rows, cols)
