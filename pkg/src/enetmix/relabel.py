"""Post-MCMC label-switching correction.

A mixture posterior is invariant under permutations of component
labels, so raw per-component traces are meaningless. The iterative
scheme here aligns every retained draw to a common reference: start
from the highest-likelihood draw, assign each draw the permutation
minimizing squared distance in (coefficients, noise variance) space,
recompute the reference as the mean of the permuted draws, and repeat
until no permutation changes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import ChainState, PosteriorChain, sticks_from_weights
from .errors import ParameterDomainError

_MAX_OUTER_ITERATIONS = 100
# Hungarian assignment is exact but cubic; past this size fall back to greedy.
_HUNGARIAN_LIMIT = 64


@dataclass(frozen=True)
class Relabeling:
    """Alignment result: one permutation per draw plus the final reference."""

    permutations: np.ndarray    # (n_draws, J), draw slot t takes old component perm[t]
    reference: np.ndarray       # (J, p) coefficient matrix used as the target
    reference_sigma2: np.ndarray  # (J,) variance part of the target
    cost_trace: np.ndarray      # (n_draws,) final assignment cost per draw


def _assignment_cost(beta: np.ndarray, sigma2: np.ndarray,
                     ref_beta: np.ndarray, ref_sigma2: np.ndarray) -> np.ndarray:
    """cost[t, s]: placing source component s in target slot t."""
    sq = ((ref_beta[:, None, :] - beta[None, :, :]) ** 2).sum(axis=2)
    return sq + (ref_sigma2[:, None] - sigma2[None, :]) ** 2


def _solve_assignment(cost: np.ndarray) -> np.ndarray:
    J = cost.shape[0]
    if J <= _HUNGARIAN_LIMIT:
        rows, cols = linear_sum_assignment(cost)
        perm = np.empty(J, dtype=np.int64)
        perm[rows] = cols
        return perm
    # Greedy: fill each target slot with the nearest unused source.
    perm = np.full(J, -1, dtype=np.int64)
    used = np.zeros(J, dtype=bool)
    for t in np.argsort(cost.min(axis=1)):
        order = np.argsort(cost[t])
        for s in order:
            if not used[s]:
                perm[t] = s
                used[s] = True
                break
    return perm


def _permute_state(state: ChainState, perm: np.ndarray) -> ChainState:
    """Apply one permutation consistently to every per-component field."""
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(perm.shape[0])
    pi = state.pi[perm]
    return replace(
        state,
        u=sticks_from_weights(pi),
        pi=pi,
        beta=state.beta[perm],
        sigma2=state.sigma2[perm],
        tau=state.tau[perm],
        c=state.c[perm],
        z=inverse[state.z],
    )


def relabel_chain(chain: PosteriorChain,
                  reference: Relabeling | None = None):
    """Align component labels across draws; returns (chain, Relabeling).

    The reference defaults to the draw with the highest stored mixture
    log likelihood. Passing another chain's :class:`Relabeling` aligns
    this chain to the labels chosen there, which keeps multi-chain
    pools consistent.
    """
    if chain.relabeled:
        raise ParameterDomainError("chain is already relabeled")
    if not chain.draws:
        raise ParameterDomainError("cannot relabel an empty chain")
    draws = chain.draws
    n_draws = len(draws)
    J = draws[0].J

    beta = np.stack([d.beta for d in draws])
    sigma2 = np.stack([d.sigma2 for d in draws])

    if reference is not None:
        ref_beta = np.asarray(reference.reference, dtype=np.float64)
        ref_sigma2 = np.asarray(reference.reference_sigma2, dtype=np.float64)
    elif chain.logliks:
        best = int(np.argmax(chain.logliks))
        ref_beta = beta[best]
        ref_sigma2 = sigma2[best]
    else:
        ref_beta = beta[0]
        ref_sigma2 = sigma2[0]

    perms = np.tile(np.arange(J, dtype=np.int64), (n_draws, 1))
    costs = np.zeros(n_draws)
    for _ in range(_MAX_OUTER_ITERATIONS):
        changed = False
        for d in range(n_draws):
            cost = _assignment_cost(beta[d], sigma2[d], ref_beta, ref_sigma2)
            perm = _solve_assignment(cost)
            costs[d] = cost[np.arange(J), perm].sum()
            if not np.array_equal(perm, perms[d]):
                perms[d] = perm
                changed = True
        permuted_beta = np.take_along_axis(beta, perms[:, :, None], axis=1)
        rows = np.arange(n_draws)[:, None]
        permuted_sigma2 = sigma2[rows, perms]
        ref_beta = permuted_beta.mean(axis=0)
        ref_sigma2 = permuted_sigma2.mean(axis=0)
        if not changed:
            break
    else:
        warnings.warn(
            f"relabeling did not converge in {_MAX_OUTER_ITERATIONS} iterations;"
            " returning the last labeling",
            stacklevel=2,
        )

    new_draws = tuple(
        _permute_state(d, perms[i]) for i, d in enumerate(draws)
    )
    relabeled = replace(chain, draws=new_draws, relabeled=True)
    return relabeled, Relabeling(
        permutations=perms, reference=ref_beta,
        reference_sigma2=ref_sigma2, cost_trace=costs,
    )
