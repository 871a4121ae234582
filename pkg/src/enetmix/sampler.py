"""Custom MCMC for the mixture hierarchy: one full Gibbs sweep with
Metropolis-Hastings sub-steps over every latent, plus the chain driver.

Conjugate blocks (z, sticks, concentration, coefficients, prior-state
indicators and weights) are sampled exactly. Blocks whose conditionals
have no closed form (tau, noise variances, penalty pairs) use MH against
the explicitly written joint density, so no conditional can be
mis-derived: everything targets :func:`augmented_logpdf` plus the
relevant likelihood and prior factors.

All categorical conditionals are computed in log space; the truncated
prior raised to the feature dimension underflows linear space quickly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from . import rngdist
from .errors import NumericalCollapseError, ResponseDomainError
from .model import (
    ChainState,
    Dataset,
    Hyperparameters,
    PosteriorChain,
    init_state,
    stick_breaking,
    _sample_categorical_rows,
)
from .rngdist import RandomSource

_HALF_LOG_PI = 0.5 * math.log(math.pi)
_U_LO = np.finfo(np.float64).tiny
_U_HI = np.nextafter(1.0, 0.0)

# Robbins-Monro target used when pre-burn-in step adaptation is enabled.
_ADAPT_TARGET = 0.35


@dataclass(frozen=True)
class SweepDiagnostics:
    """Per-sweep convergence monitoring record."""

    iteration: int
    loglik: float
    accept_lambda1: float
    accept_lambda2: float
    accept_sigma2: float
    occupied_components: int


def mixture_loglik(state: ChainState, data: Dataset) -> float:
    """Mixture log likelihood of the full dataset under the state."""
    means = data.X @ state.beta.T
    with np.errstate(divide="ignore"):
        logw = np.log(state.pi)[None, :] + rngdist.normal_logpdf(
            data.y[:, None], means, state.sigma2[None, :]
        )
    return float(logsumexp(logw, axis=1).sum())


def augmented_logpdf(beta_j, tau_j, sigma2_j, lam1, lam2) -> float:
    """Joint log density of one component's (beta, tau) block.

    beta_jl | tau_jl ~ N(0, sigma2 (1 - tau_jl) / lambda2) and
    tau_jl ~ Inv-Gamma(1/2, lambda1^2 / (8 sigma2 lambda2)) truncated to
    (0, 1), independently over features. All normalizing constants that
    depend on (sigma2, lambda1, lambda2) are included so the same
    function serves every Metropolis target and the prior-state
    conditional.
    """
    one_minus_tau = 1.0 - tau_j
    theta = lam1 * lam1 / (8.0 * sigma2_j * lam2)
    p = tau_j.shape[0]

    beta_part = (
        -0.5 * np.sum(np.log(2.0 * np.pi * sigma2_j * one_minus_tau / lam2))
        - lam2 / (2.0 * sigma2_j) * np.sum(beta_j * beta_j / one_minus_tau)
    )
    tau_part = (
        p * (0.5 * math.log(theta) - _HALF_LOG_PI)
        - 1.5 * np.sum(np.log(tau_j))
        - theta * np.sum(1.0 / tau_j)
        - p * rngdist.log_erfc_sqrt(theta)
    )
    return float(beta_part + tau_part)


def z_log_weights(state: ChainState, data: Dataset) -> np.ndarray:
    """(n, J) unnormalized log weights of the sample-assignment conditional."""
    means = data.X @ state.beta.T
    with np.errstate(divide="ignore"):
        return np.log(state.pi)[None, :] + rngdist.normal_logpdf(
            data.y[:, None], means, state.sigma2[None, :]
        )


def update_z(state: ChainState, data: Dataset, src: RandomSource) -> np.ndarray:
    """Redraw every sample's component indicator from its categorical conditional."""
    logw = z_log_weights(state, data)
    finite = np.isfinite(logw).any(axis=1)
    if not finite.all():
        row = int(np.argmin(finite))
        raise NumericalCollapseError(
            f"all component weights vanished for sample {row}"
        )
    return _sample_categorical_rows(logw, src)


def update_sticks(state: ChainState, hyper: Hyperparameters, src: RandomSource):
    """Redraw stick fractions from their Beta conditionals and rebuild pi.

    With n_j samples in component j and the concentration alpha, the
    j-th fraction is Beta(1 + n_j, alpha + sum of later counts).
    """
    J = state.J
    counts = np.bincount(state.z, minlength=J).astype(np.float64)
    tail = counts.sum() - np.cumsum(counts)
    u = np.empty(J - 1)
    for j in range(J - 1):
        u[j] = rngdist.sample_beta(1.0 + counts[j], state.alpha + tail[j], src)
    u = np.clip(u, _U_LO, _U_HI)
    return u, stick_breaking(u)


def update_alpha(state: ChainState, hyper: Hyperparameters, src: RandomSource) -> float:
    """Conjugate Gamma update of the stick concentration given the fractions."""
    shape = hyper.e + (state.J - 1)
    rate = hyper.f - float(np.sum(np.log1p(-state.u)))
    return float(rngdist.sample_gamma(shape, rate, src))


def beta_conditional_moments(state: ChainState, data: Dataset, j: int):
    """Mean and precision of component j's Gaussian coefficient conditional.

    Precision is (X_j' X_j + lambda2 diag(1/(1-tau_j))) / sigma2_j over
    the rows assigned to j; with no assigned rows this reduces to the
    prior, whose mean is zero.
    """
    lam2 = state.lambda2[state.c[j]]
    prior_prec = lam2 / (1.0 - state.tau[j])
    rows = state.z == j
    if rows.any():
        Xj = data.X[rows]
        precision = (Xj.T @ Xj + np.diag(prior_prec)) / state.sigma2[j]
        b = Xj.T @ data.y[rows] / state.sigma2[j]
        mean, _ = rngdist.mvn_precision_moments(b, precision)
    else:
        precision = np.diag(prior_prec / state.sigma2[j])
        mean = np.zeros(state.p)
    return mean, precision


def update_beta(state: ChainState, data: Dataset, src: RandomSource) -> np.ndarray:
    """Redraw every component's coefficients from their Gaussian conditionals."""
    beta = np.empty_like(state.beta)
    for j in range(state.J):
        rows_any = bool(np.any(state.z == j))
        if rows_any:
            mean, precision = beta_conditional_moments(state, data, j)
            beta[j] = rngdist.sample_mvn_precision(mean, precision, src)
        else:
            # Prior draw: independent zero-mean normals, no factorization needed.
            lam2 = state.lambda2[state.c[j]]
            sd = np.sqrt(state.sigma2[j] * (1.0 - state.tau[j]) / lam2)
            beta[j] = sd * src.standard_normal(state.p)
    return beta


def update_tau(state: ChainState, src: RandomSource) -> np.ndarray:
    """MH-within-Gibbs refresh of the scale-mixture latents.

    Independence proposal from the truncated inverse-Gamma prior; the
    prior terms cancel, leaving the Gaussian factor
    (1-tau)^(-1/2) exp(-lambda2 beta^2 / (2 sigma2 (1-tau))) as the
    acceptance ratio, applied coordinate-wise.
    """
    tau = state.tau.copy()
    for j in range(state.J):
        lam1 = state.lambda1[state.c[j]]
        lam2 = state.lambda2[state.c[j]]
        sigma2 = state.sigma2[j]
        theta = lam1 * lam1 / (8.0 * sigma2 * lam2)
        proposal = rngdist.trunc_inv_gamma_01_half(theta, src, size=state.p)
        scale = lam2 * state.beta[j] ** 2 / (2.0 * sigma2)
        log_g_new = -0.5 * np.log1p(-proposal) - scale / (1.0 - proposal)
        log_g_old = -0.5 * np.log1p(-tau[j]) - scale / (1.0 - tau[j])
        accept = np.log(src.uniform(size=state.p)) < log_g_new - log_g_old
        tau[j] = np.where(accept, proposal, tau[j])
    return tau


def _log_mh_step(current: float, log_target: Callable[[float], float],
                 step: float, src: RandomSource) -> tuple[float, bool]:
    """One random-walk MH step on the log scale; returns (value, accepted)."""
    proposal = current * math.exp(step * float(src.standard_normal()))
    log_ratio = (
        log_target(proposal) - log_target(current)
        + math.log(proposal) - math.log(current)
    )
    if math.log(float(src.uniform())) < log_ratio:
        return proposal, True
    return current, False


def update_sigma2(state: ChainState, data: Dataset, hyper: Hyperparameters,
                  src: RandomSource, include_coupling: bool = True,
                  step: Optional[float] = None):
    """Random-walk MH on log sigma2_j against the full conditional.

    The target stacks the inverse-Gamma prior, the likelihood of the
    assigned rows, and (because sigma enters both the coefficient and
    the scale-mixture priors) the augmented block density.
    ``include_coupling=False`` drops that last factor, collapsing the
    target to the conjugate Inv-Gamma(a + n_j/2, b + rss/2) for tests.
    Returns the new vector and the sweep acceptance rate.
    """
    if step is None:
        step = hyper.mh_step_sigma
    sigma2 = state.sigma2.copy()
    resid = data.y[:, None] - data.X @ state.beta.T
    accepted = 0
    for j in range(state.J):
        rows = state.z == j
        nj = float(rows.sum())
        rss = float(np.sum(resid[rows, j] ** 2))

        def log_target(s2: float, _j=j, _nj=nj, _rss=rss) -> float:
            value = rngdist.inv_gamma_logpdf(s2, hyper.a, hyper.b)
            value += -0.5 * _nj * math.log(2.0 * math.pi * s2) - _rss / (2.0 * s2)
            if include_coupling:
                value += augmented_logpdf(
                    state.beta[_j], state.tau[_j], s2,
                    state.lambda1[state.c[_j]], state.lambda2[state.c[_j]],
                )
            return value

        sigma2[j], ok = _log_mh_step(float(sigma2[j]), log_target, step, src)
        accepted += ok
    return sigma2, accepted / state.J


def c_log_weights(state: ChainState) -> np.ndarray:
    """(J, K) unnormalized log weights of the prior-state conditional."""
    logw = np.empty((state.J, state.K))
    with np.errstate(divide="ignore"):
        log_w = np.log(state.w)
    for j in range(state.J):
        for k in range(state.K):
            if np.isneginf(log_w[k]):
                logw[j, k] = -np.inf
                continue
            logw[j, k] = log_w[k] + augmented_logpdf(
                state.beta[j], state.tau[j], state.sigma2[j],
                state.lambda1[k], state.lambda2[k],
            )
    return logw


def update_c(state: ChainState, src: RandomSource) -> np.ndarray:
    """Redraw each component's prior-state indicator from its categorical."""
    if state.K == 1:
        return np.zeros(state.J, dtype=np.int64)
    logw = c_log_weights(state)
    finite = np.isfinite(logw).any(axis=1)
    if not finite.all():
        j = int(np.argmin(finite))
        raise NumericalCollapseError(
            f"all prior-state weights vanished for component {j}"
        )
    return _sample_categorical_rows(logw, src)


def update_w(state: ChainState, src: RandomSource) -> np.ndarray:
    """Conjugate Dirichlet update of the prior-state weights."""
    if state.K == 1:
        return np.ones(1)
    counts = np.bincount(state.c, minlength=state.K)
    return rngdist.sample_dirichlet(1.0 / state.K + counts, src)


def update_lambdas(state: ChainState, hyper: Hyperparameters, src: RandomSource,
                   step: Optional[float] = None):
    """Random-walk MH on the log scale for each penalty pair.

    For state k the target is the Gamma prior times the augmented block
    density of every component currently assigned to k; the lasso and
    ridge penalties take separate steps with separate acceptance counts.
    Returns (lambda1, lambda2, accept_rate1, accept_rate2).
    """
    if step is None:
        step = hyper.mh_step_lambda
    lambda1 = state.lambda1.copy()
    lambda2 = state.lambda2.copy()
    acc1 = 0
    acc2 = 0
    for k in range(state.K):
        members = np.flatnonzero(state.c == k)

        def log_target1(l1: float, _k=k, _members=members) -> float:
            value = rngdist.gamma_logpdf(l1, hyper.R, hyper.V / 2.0)
            for j in _members:
                value += augmented_logpdf(
                    state.beta[j], state.tau[j], state.sigma2[j], l1, lambda2[_k]
                )
            return value

        lambda1[k], ok = _log_mh_step(float(lambda1[k]), log_target1, step, src)
        acc1 += ok

        def log_target2(l2: float, _k=k, _members=members) -> float:
            value = rngdist.gamma_logpdf(l2, hyper.L, hyper.V / 2.0)
            for j in _members:
                value += augmented_logpdf(
                    state.beta[j], state.tau[j], state.sigma2[j], lambda1[_k], l2
                )
            return value

        lambda2[k], ok = _log_mh_step(float(lambda2[k]), log_target2, step, src)
        acc2 += ok
    return lambda1, lambda2, acc1 / state.K, acc2 / state.K


def one_sweep(state: ChainState, data: Dataset, hyper: Hyperparameters,
              src: RandomSource, iteration: int = 0,
              include_coupling: bool = True,
              step_sigma: Optional[float] = None,
              step_lambda: Optional[float] = None):
    """One full Gibbs sweep in the fixed order z, sticks, alpha, beta,
    tau, sigma2, c, w, lambdas. Returns (state, diagnostics)."""
    z = update_z(state, data, src)
    state = replace(state, z=z)
    u, pi = update_sticks(state, hyper, src)
    state = replace(state, u=u, pi=pi)
    state = replace(state, alpha=update_alpha(state, hyper, src))
    state = replace(state, beta=update_beta(state, data, src))
    state = replace(state, tau=update_tau(state, src))
    sigma2, acc_s = update_sigma2(
        state, data, hyper, src, include_coupling=include_coupling, step=step_sigma
    )
    state = replace(state, sigma2=sigma2)
    state = replace(state, c=update_c(state, src))
    state = replace(state, w=update_w(state, src))
    lambda1, lambda2, acc_l1, acc_l2 = update_lambdas(
        state, hyper, src, step=step_lambda
    )
    state = replace(state, lambda1=lambda1, lambda2=lambda2)

    loglik = mixture_loglik(state, data)
    if not math.isfinite(loglik):
        raise NumericalCollapseError(f"mixture log likelihood is {loglik}")
    diag = SweepDiagnostics(
        iteration=iteration,
        loglik=loglik,
        accept_lambda1=acc_l1,
        accept_lambda2=acc_l2,
        accept_sigma2=acc_s,
        occupied_components=int(np.unique(state.z).size),
    )
    return state, diag


def run_chain(data: Dataset, hyper: Hyperparameters, seed: int, *,
              stream: int = 0,
              adapt_during_burnin: bool = False,
              on_sweep: Optional[Callable[[SweepDiagnostics], None]] = None):
    """Run one chain and return (PosteriorChain, diagnostics list).

    Initializes from :func:`enetmix.model.init_state`, performs ``n_iter``
    sweeps, and retains every ``thin``-th post-burn-in state. The run is
    deterministic given (seed, stream). With ``adapt_during_burnin`` the
    two MH step sizes follow a Robbins-Monro recursion toward 35%
    acceptance until burn-in ends, then stay fixed so the retained chain
    is Markovian. A numerical collapse aborts with the failing sweep
    index and the last good state attached.
    """
    if not data.fit_ready:
        raise ResponseDomainError(
            "dataset responses are probabilities; apply logit_transform before fitting"
        )
    src = RandomSource(seed, stream)
    state = init_state(data, hyper, src)
    step_sigma = hyper.mh_step_sigma
    step_lambda = hyper.mh_step_lambda

    draws: list[ChainState] = []
    logliks: list[float] = []
    diagnostics: list[SweepDiagnostics] = []
    for t in range(1, hyper.n_iter + 1):
        try:
            state, diag = one_sweep(
                state, data, hyper, src, iteration=t,
                step_sigma=step_sigma, step_lambda=step_lambda,
            )
        except NumericalCollapseError as err:
            raise NumericalCollapseError(
                f"sweep {t} collapsed: {err}", iteration=t, last_good_state=state
            ) from err
        if adapt_during_burnin and t <= hyper.burn_in:
            gain = 1.0 / t ** 0.6
            step_sigma *= math.exp(gain * (diag.accept_sigma2 - _ADAPT_TARGET))
            mean_acc = 0.5 * (diag.accept_lambda1 + diag.accept_lambda2)
            step_lambda *= math.exp(gain * (mean_acc - _ADAPT_TARGET))
        diagnostics.append(diag)
        if on_sweep is not None:
            on_sweep(diag)
        if t > hyper.burn_in and (t - hyper.burn_in) % hyper.thin == 0:
            state.validate()
            draws.append(state)
            logliks.append(diag.loglik)

    chain = PosteriorChain(
        draws=tuple(draws), hyper=hyper, seed=seed, class_id=data.class_id,
        relabeled=False, logliks=tuple(logliks),
    )
    return chain, diagnostics


def prior_draw(n: int, p: int, hyper: Hyperparameters, src: RandomSource) -> ChainState:
    """Draw every latent from its prior (indicators included).

    Used by joint-distribution correctness checks: alternating this with
    response regeneration and full sweeps must leave the prior invariant.
    """
    J, K = hyper.J, hyper.K
    alpha = float(rngdist.sample_gamma(hyper.e, hyper.f, src))
    u = np.clip(rngdist.sample_beta(1.0, alpha, src, size=J - 1), _U_LO, _U_HI)
    pi = stick_breaking(u)
    w = rngdist.sample_dirichlet(np.full(K, 1.0 / K), src) if K > 1 else np.ones(1)
    with np.errstate(divide="ignore"):
        c = _sample_categorical_rows(np.tile(np.log(w), (J, 1)), src)
    lambda1 = np.atleast_1d(rngdist.sample_gamma(hyper.R, hyper.V / 2.0, src, size=K))
    lambda2 = np.atleast_1d(rngdist.sample_gamma(hyper.L, hyper.V / 2.0, src, size=K))
    sigma2 = np.atleast_1d(rngdist.sample_inv_gamma(hyper.a, hyper.b, src, size=J))
    tau = np.empty((J, p))
    beta = np.empty((J, p))
    for j in range(J):
        theta = lambda1[c[j]] ** 2 / (8.0 * sigma2[j] * lambda2[c[j]])
        tau[j] = rngdist.trunc_inv_gamma_01_half(theta, src, size=p)
        sd = np.sqrt(sigma2[j] * (1.0 - tau[j]) / lambda2[c[j]])
        beta[j] = sd * src.standard_normal(p)
    with np.errstate(divide="ignore"):
        z = _sample_categorical_rows(np.tile(np.log(pi), (n, 1)), src)
    state = ChainState(
        u=u, pi=pi, alpha=alpha, beta=beta, sigma2=sigma2, tau=tau,
        z=z, c=c, w=w, lambda1=lambda1, lambda2=lambda2,
    )
    state.validate()
    return state


def regenerate_responses(state: ChainState, X: np.ndarray, src: RandomSource):
    """Draw (z, y) jointly from the model given the current parameters."""
    n = X.shape[0]
    with np.errstate(divide="ignore"):
        z = _sample_categorical_rows(np.tile(np.log(state.pi), (n, 1)), src)
    means = np.einsum("ij,ij->i", X, state.beta[z])
    y = means + np.sqrt(state.sigma2[z]) * src.standard_normal(n)
    return z, y
