"""Independent oracles shared across the test suite.

Everything here recomputes expected values through a route the library
does not use: direct quadrature, closed-form conjugate algebra with
plain matrix inversion, scipy reference distributions, sklearn's
coordinate-descent lasso, or hand-rolled reference samplers.
"""

import numpy as np
from scipy import integrate, stats


# ------------------------------------------------------------------ #
# Densities and CDFs by quadrature
# ------------------------------------------------------------------ #

def trunc_invgamma_cdf(t, a, b):
    """CDF of Inv-Gamma(a, b) truncated to (0, 1), by numeric quadrature."""

    def density(x):
        return x ** (-a - 1.0) * np.exp(-b / x)

    total, _ = integrate.quad(density, 0.0, 1.0)
    t = np.atleast_1d(t)
    out = np.empty(t.shape)
    for i, ti in enumerate(t):
        part, _ = integrate.quad(density, 0.0, float(ti))
        out[i] = part / total
    return out if out.size > 1 else float(out[0])


def tau_conditional_cdf(t, theta, gauss_scale):
    """CDF of the tau full conditional with coefficient term ``gauss_scale``.

    Density on (0, 1): x^{-3/2} exp(-theta/x) (1-x)^{-1/2}
    exp(-gauss_scale/(1-x)); ``gauss_scale`` is
    lambda2 * beta^2 / (2 sigma2), zero for the beta=0 case. Integrated
    after substituting s = sqrt(1-x), which removes the endpoint
    singularity:  integral_0^t density dx = integral_{sqrt(1-t)}^1 h(s) ds.
    """

    def h(s):
        one_minus = 1.0 - s * s
        out = 2.0 * one_minus ** -1.5 * np.exp(-theta / one_minus)
        if gauss_scale > 0.0:
            out = out * np.exp(-gauss_scale / (s * s))
        return out

    total, _ = integrate.quad(h, 0.0, 1.0)
    t = np.atleast_1d(t)
    out = np.empty(t.shape)
    for i, ti in enumerate(t):
        part, _ = integrate.quad(h, np.sqrt(1.0 - float(ti)), 1.0)
        out[i] = part / total
    return out if out.size > 1 else float(out[0])


def tau_conditional_sampler(theta, gauss_scale, n, seed, grid_size=2_000_001):
    """Exact iid draws of the tau conditional via dense-grid inverse CDF.

    Sampled in the substituted variable s = sqrt(1-x), where the density
    h(s) = 2 (1-s^2)^{-3/2} exp(-theta/(1-s^2)) exp(-gauss_scale/s^2) is
    bounded, so the trapezoid CDF is accurate; the raw density's
    (1-x)^{-1/2} endpoint spike would corrupt a direct grid.
    """
    s = np.linspace(1e-9, 1.0 - 1e-9, grid_size)
    one_minus = 1.0 - s * s
    with np.errstate(divide="ignore", over="ignore"):
        h = 2.0 * one_minus ** -1.5 * np.exp(-theta / one_minus)
        if gauss_scale > 0.0:
            h = h * np.exp(-gauss_scale / (s * s))
    cdf = np.concatenate([[0.0], np.cumsum((h[1:] + h[:-1]) * np.diff(s) / 2.0)])
    cdf /= cdf[-1]
    rng = np.random.default_rng(seed)
    s_draws = np.interp(rng.uniform(size=n), cdf, s)
    return 1.0 - s_draws ** 2


def augmented_density(beta, tau, sigma2, lam1, lam2):
    """Joint density of one (beta, tau) block via scipy distributions."""
    var = sigma2 * (1.0 - tau) / lam2
    theta = lam1 ** 2 / (8.0 * sigma2 * lam2)
    ig = stats.invgamma(0.5, scale=theta)
    beta_part = np.prod(stats.norm.pdf(beta, 0.0, np.sqrt(var)))
    tau_part = np.prod(ig.pdf(tau) / ig.cdf(1.0))
    return float(beta_part * tau_part)


def lambda_pair_posterior_mean(beta, tau, sigma2, R, L, V, grid=400, hi=30.0):
    """E[lambda1], E[lambda2] for a single (beta, tau) block with p = 1,
    by 2-D grid quadrature over the penalty pair."""
    beta = float(np.squeeze(beta))
    tau = float(np.squeeze(tau))
    l1 = np.linspace(1e-4, hi, grid)
    l2 = np.linspace(1e-4, hi, grid)
    L1, L2 = np.meshgrid(l1, l2, indexing="ij")
    theta = L1 ** 2 / (8.0 * sigma2 * L2)
    var = sigma2 * (1.0 - tau) / L2
    with np.errstate(divide="ignore"):
        logdens = (
            stats.gamma.logpdf(L1, R, scale=2.0 / V)
            + stats.gamma.logpdf(L2, L, scale=2.0 / V)
            + stats.norm.logpdf(beta, 0.0, np.sqrt(var))
            + stats.invgamma.logpdf(tau, 0.5, scale=theta)
            - np.log(stats.invgamma.cdf(1.0, 0.5, scale=theta))
        )
    # where the truncation mass underflows the truncated density at any
    # interior tau is astronomically small; -inf is the faithful value
    logdens[theta > 700.0] = -np.inf
    dens = np.exp(logdens - logdens.max())
    dens /= dens.sum()
    return float((dens.sum(axis=1) * l1).sum()), float((dens.sum(axis=0) * l2).sum())


# ------------------------------------------------------------------ #
# Closed-form conjugate algebra (legacy-prior form)
# ------------------------------------------------------------------ #

def gaussian_conditional(X, y, sigma2, prior_mean, prior_cov):
    """Posterior mean/cov of beta under N(prior_mean, prior_cov), computed
    with plain inversion rather than Cholesky solves."""
    prior_prec = np.linalg.inv(prior_cov)
    post_prec = X.T @ X / sigma2 + prior_prec
    post_cov = np.linalg.inv(post_prec)
    post_mean = post_cov @ (X.T @ y / sigma2 + prior_prec @ prior_mean)
    return post_mean, post_cov


# ------------------------------------------------------------------ #
# Synthetic data generators
# ------------------------------------------------------------------ #

def gen_mixture_linear(seed, n, betas, sigma, weights=None, duplicate_cols=None):
    """Sample (X, y, z) from a mixture of noiseless-feature linear models.

    ``duplicate_cols=(i, j)`` copies column i into column j after
    sampling, so the pair is exactly collinear.
    """
    rng = np.random.default_rng(seed)
    betas = np.asarray(betas, dtype=np.float64)
    n_comp, p = betas.shape
    weights = np.full(n_comp, 1.0 / n_comp) if weights is None else np.asarray(weights)
    X = rng.normal(size=(n, p))
    if duplicate_cols is not None:
        i, j = duplicate_cols
        X[:, j] = X[:, i]
    z = rng.choice(n_comp, size=n, p=weights)
    y = np.einsum("ij,ij->i", X, betas[z]) + sigma * rng.normal(size=n)
    return X, y, z


def gen_piecewise(seed, n, supports, betas, sigma):
    """Two-region target with disjoint active feature sets.

    Each sample is active (nonzero) only on its region's support; the
    response follows that region's linear rule plus noise.
    """
    rng = np.random.default_rng(seed)
    betas = np.asarray(betas, dtype=np.float64)
    p = betas.shape[1]
    region = rng.integers(0, len(supports), size=n)
    X = np.zeros((n, p))
    for r, support in enumerate(supports):
        rows = region == r
        X[np.ix_(rows, support)] = rng.normal(size=(int(rows.sum()), len(support)))
    y = np.einsum("ij,ij->i", X, betas[region]) + sigma * rng.normal(size=n)
    return X, y, region


# ------------------------------------------------------------------ #
# Reference fits
# ------------------------------------------------------------------ #

def lasso_coefficients(X, y, alpha):
    """Coordinate-descent lasso coefficients (independent oracle)."""
    from sklearn.linear_model import Lasso

    fit = Lasso(alpha=alpha, fit_intercept=True, max_iter=50000).fit(X, y)
    return fit.coef_


def single_line_rmse(X, y):
    """RMSE of one least-squares line (with intercept) fit to all data."""
    A = np.column_stack([X, np.ones(len(y))])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(np.sqrt(np.mean((y - A @ coef) ** 2)))


def ridge_gibbs(X, y, lam2, a, b, n_iter, seed):
    """Reference Gibbs sampler for Bayesian ridge regression.

    beta | sigma2 ~ N(mu, sigma2 * S), S = (X'X + lam2 I)^-1,
    sigma2 | beta ~ Inv-Gamma(a + (n+p)/2, b + rss/2 + lam2 |beta|^2 / 2).
    Returns the beta draws.
    """
    rng = np.random.default_rng(seed)
    n, p = X.shape
    S = np.linalg.inv(X.T @ X + lam2 * np.eye(p))
    mu = S @ X.T @ y
    chol = np.linalg.cholesky(S)
    sigma2 = 1.0
    draws = np.empty((n_iter, p))
    for t in range(n_iter):
        beta = mu + np.sqrt(sigma2) * (chol @ rng.normal(size=p))
        rss = np.sum((y - X @ beta) ** 2)
        shape = a + 0.5 * (n + p)
        rate = b + 0.5 * rss + 0.5 * lam2 * np.sum(beta ** 2)
        sigma2 = 1.0 / rng.gamma(shape, 1.0 / rate)
        draws[t] = beta
    return draws
