"""The empirical pair-copula estimator for every edge of a regular vine.

Conditional pseudo-observations are propagated level by level: the inputs of
an edge ``(i, j | v)`` are the normalized ranks of finite-difference estimates
of ``F_{i|v}`` and ``F_{j|v}`` produced by its parents.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import ranks
from .exceptions import InvalidInputError
from .ranks import Bandwidth, PairSample
from .vine import RegularVine, VineEdge

MIN_N = 10
WARN_N = 100


@dataclass(frozen=True)
class EdgeEstimate:
    """Inputs of one edge's empirical pair-copula."""

    edge: VineEdge
    pairs: PairSample
    rho_s: float
    ties: int = 0
    independent: bool = False

    @property
    def h(self) -> float:
        return self.pairs.h

    def copula(self, point):
        return ranks.empirical_copula(self.pairs, point)


@dataclass(frozen=True)
class FittedEmpiricalVine:
    """Result of :func:`fit`. ``conditionals`` keeps the raw ratio estimates
    ``F_hat(k | cond)`` keyed by ``(k, cond)`` before rank normalization."""

    vine: RegularVine
    n: int
    bandwidth: Bandwidth
    h: float
    estimates: dict
    conditionals: dict = field(default_factory=dict)
    ties: str = "lower-rank"

    def estimate(self, ref) -> EdgeEstimate:
        return self.estimates[self.vine.edge(ref).key]

    def edges(self):
        return [self.estimates[e.key] for e in self.vine.edges()]


def _ground_store(data) -> dict:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise InvalidInputError("data must be an (n, d) matrix")
    if not np.isfinite(data).all():
        raise InvalidInputError("data contains missing or non-finite values")
    return {(k, frozenset()): ranks.normalized_ranks(data[:, k])
            for k in range(data.shape[1])}


def _check_n(n):
    if n < MIN_N:
        raise InvalidInputError(f"need at least {MIN_N} observations, got {n}")
    if n < WARN_N:
        warnings.warn(f"sample size {n} is small for finite-difference estimates",
                      stacklevel=3)


def edge_pairs(store: dict, edge: VineEdge, h: float) -> PairSample:
    i, j, v = edge.key
    return PairSample(store[(i, v)], store[(j, v)], h)


TIE_RULES = ("lower-rank", "max")


def _rank_conditional(values, lower, ties):
    if ties == "max":
        return ranks.normalized_ranks(values)
    return ranks.tie_broken_ranks(values, lower)


def propagate(store: dict, raw: dict, edge: VineEdge, pairs: PairSample,
              independent: bool = False, ties: str = "lower-rank") -> None:
    """Add the edge's two conditional pseudo-observation vectors to ``store``.

    Ratio estimates tie often (interior windows share one count). With
    ``ties="lower-rank"`` ties are ordered by the input pseudo-observation of
    the same variable, which the conditional cdf increases with; ``"max"``
    keeps the plain indicator ranks, giving tied values a common rank.
    With ``independent=True`` the edge is treated as the independence
    copula, whose h-function is the identity.
    """
    i, j, v = edge.key
    if independent:
        fi, fj = pairs.u, pairs.v
    else:
        fi = ranks.conditional_cdf_at_samples(pairs.u, pairs.v, pairs.h)
        fj = ranks.conditional_cdf_at_samples(pairs.v, pairs.u, pairs.h)
    raw[(i, v | {j})] = fi
    raw[(j, v | {i})] = fj
    store[(i, v | {j})] = _rank_conditional(fi, pairs.u, ties)
    store[(j, v | {i})] = _rank_conditional(fj, pairs.v, ties)


def make_estimate(edge: VineEdge, pairs: PairSample, independent=False) -> EdgeEstimate:
    ties = ranks.count_ties(pairs.u) + ranks.count_ties(pairs.v)
    return EdgeEstimate(edge, pairs, ranks.spearman_from_pseudo(pairs.u, pairs.v), ties,
                        independent)


def fit(data, vine: RegularVine, bandwidth: Bandwidth | None = None,
        ties: str = "lower-rank") -> FittedEmpiricalVine:
    """Estimate every pair-copula of ``vine`` from an (n, d) data matrix."""
    bandwidth = bandwidth or Bandwidth()
    if ties not in TIE_RULES:
        raise InvalidInputError(f"ties must be one of {TIE_RULES}")
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != vine.d:
        raise InvalidInputError(
            f"data has shape {data.shape}, vine expects {vine.d} columns")
    n = data.shape[0]
    _check_n(n)
    h = bandwidth.resolve(n)
    store = _ground_store(data)
    raw = {}
    estimates = {}
    for tree in vine.trees:
        for edge in tree:
            pairs = edge_pairs(store, edge, h)
            estimates[edge.key] = make_estimate(edge, pairs)
            if edge.level < vine.d - 1:
                propagate(store, raw, edge, pairs, ties=ties)
    return FittedEmpiricalVine(vine, n, bandwidth, h, estimates, raw, ties)


def edge_copula(fitted: FittedEmpiricalVine, edge, point):
    """Empirical pair-copula of ``edge`` at ``point`` (or an (m, 2) array)."""
    return fitted.estimate(edge).copula(point)


def conditional_pseudo_obs(fitted: FittedEmpiricalVine, edge, direction: int = 0):
    """Raw conditional cdf estimates produced by ``edge`` at the sample points.

    ``direction=0`` gives F_hat(i | v + j), ``direction=1`` gives F_hat(j | v + i).
    The top edge feeds no further level; its estimates are computed on demand.
    """
    est = fitted.estimate(edge)
    i, j, v = est.edge.key
    if direction not in (0, 1):
        raise InvalidInputError("direction must be 0 (i given j) or 1 (j given i)")
    key = (i, v | {j}) if direction == 0 else (j, v | {i})
    if key in fitted.conditionals:
        return fitted.conditionals[key]
    p = est.pairs
    if direction == 0:
        return ranks.conditional_cdf_at_samples(p.u, p.v, p.h)
    return ranks.conditional_cdf_at_samples(p.v, p.u, p.h)
