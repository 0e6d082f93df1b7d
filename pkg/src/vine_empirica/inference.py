"""Inference for empirical pair-copulas.

Covers the asymptotic variance and its plug-in estimate, the multiplier
bootstrap of the empirical pair-copula process, confidence intervals for
copula values and for Spearman's rho, the Cramer-von Mises test of
conditional independence and a goodness-of-fit test with a parametric
bootstrap through the estimation pipeline.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats

from . import estimator, ranks
from .estimator import FittedEmpiricalVine
from .exceptions import EstimationError, InvalidInputError
from .families import IndependenceCopula, PairCopula, family_class
from .models import ParametricVineModel
from .ranks import PairSample
from .vine import RegularVine

LEVELS = (0.10, 0.05, 0.01)
VARIANCE_FORMS = ("corrected", "printed")


# ----------------------------------------------------------------------
# result types

@dataclass(frozen=True)
class BootstrapEnsemble:
    """``values`` has shape (B, m): one row per multiplier draw, one column per point."""

    values: np.ndarray
    points: np.ndarray
    seed: object = None
    multiplier: str = "standard-normal"

    @property
    def B(self) -> int:
        return self.values.shape[0]

    def quantile(self, beta):
        return np.quantile(self.values, beta, axis=0)

    def variance(self):
        return self.values.var(axis=0, ddof=1) if self.B > 1 else np.zeros(self.values.shape[1])

    def sd(self):
        return np.sqrt(self.variance())


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    method: str
    estimate: float

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def covers(self, value) -> bool:
        return self.lower <= value <= self.upper

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "level": self.level,
                "method": self.method}


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    critical_values: dict = field(default_factory=dict)
    replicates: int = 0

    def reject(self, alpha: float) -> bool:
        return self.p_value <= alpha

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value,
                "critical_values": {str(k): v for k, v in self.critical_values.items()},
                "replicates": self.replicates}


# ----------------------------------------------------------------------
# asymptotic variance

def asymptotic_variance(C, C1, C2, u, v, form: str = "corrected"):
    """Pointwise variance of the limiting pair-copula process.

    ``C1`` and ``C2`` are the partial derivatives in the first and second
    argument. ``form="corrected"`` is the variance of
    ``alpha - C1 alpha(u, 1) - C2 alpha(1, v)``, whose three cross terms carry
    a factor two; it reduces to ``uv(1-u)(1-v)`` for the product copula.
    ``form="printed"`` omits those factors and reduces to ``uv(1-uv)``.
    Negative values, possible with inconsistent plug-ins, are clamped to 0.
    """
    if form not in VARIANCE_FORMS:
        raise InvalidInputError(f"form must be one of {VARIANCE_FORMS}")
    C, C1, C2, u, v = (np.asarray(a, dtype=float) for a in (C, C1, C2, u, v))
    k = 2.0 if form == "corrected" else 1.0
    out = (C * (1 - C) + C1 ** 2 * u * (1 - u) + C2 ** 2 * v * (1 - v)
           - k * C1 * C * (1 - u) - k * C2 * C * (1 - v) + k * C1 * C2 * (C - u * v))
    if np.any(out < 0):
        n_neg = int(np.sum(out < 0))
        if np.min(out) < -1e-12:
            warnings.warn(f"{n_neg} negative variance value(s) clamped to 0", stacklevel=2)
        out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def true_variance(copula: PairCopula, point, form: str = "corrected") -> float:
    """Asymptotic variance at ``point`` for a known exchangeable copula."""
    u, v = point
    return asymptotic_variance(copula.cdf(u, v), copula.h(v, u), copula.h(u, v), u, v, form)


def plugin_variance(fitted: FittedEmpiricalVine, edge, point, form: str = "corrected"):
    """Plug-in variance using the edge's empirical copula and its finite-difference partials."""
    pairs = fitted.estimate(edge).pairs
    pts, _ = _points(point)
    C = ranks.empirical_copula(pairs, pts)
    C1 = ranks.partial_derivative_estimate(pairs, pts, axis="first")
    C2 = ranks.partial_derivative_estimate(pairs, pts, axis="second")
    out = asymptotic_variance(C, C1, C2, pts[:, 0], pts[:, 1], form)
    return float(out[0]) if np.ndim(point) == 1 else out


# ----------------------------------------------------------------------
# multiplier bootstrap

def seed_sequence(seed) -> np.random.SeedSequence:
    """Accept an int, a sequence of ints, None or an existing SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _points(point):
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    if pts.shape[-1] != 2:
        raise InvalidInputError("points must have two coordinates")
    return pts, np.ndim(point) == 1


def _pairs_of(source, edge=None) -> PairSample:
    if isinstance(source, PairSample):
        return source
    if edge is None:
        raise InvalidInputError("an edge is required with a fitted vine")
    return source.estimate(edge).pairs


def _multipliers(B, n, seed, multipliers=None):
    if multipliers is not None:
        xi = np.asarray(multipliers, dtype=float)
        if xi.shape != (B, n):
            raise InvalidInputError(f"multipliers must have shape ({B}, {n})")
        return xi
    # one stream per replicate keeps results independent of batching
    children = seed_sequence(seed).spawn(B)
    return np.stack([np.random.default_rng(c).standard_normal(n) for c in children])


def _process_replicates(pairs: PairSample, pts, xi, C1, C2):
    n = pairs.n
    xc = xi - xi.mean(axis=1, keepdims=True)
    below_u = pairs.u[:, None] <= pts[None, :, 0]
    below_v = pairs.v[:, None] <= pts[None, :, 1]
    scale = 1.0 / np.sqrt(n)
    joint = xc @ (below_u & below_v) * scale
    marg_u = xc @ below_u * scale
    marg_v = xc @ below_v * scale
    return joint - C1[None, :] * marg_u - C2[None, :] * marg_v


def multiplier_resample(source, edge=None, points=((0.5, 0.5),), B: int = 1000, seed=None,
                        multipliers=None) -> BootstrapEnsemble:
    """Multiplier bootstrap replicates of the empirical pair-copula process.

    ``source`` is a fitted vine (with ``edge``) or a :class:`PairSample`.
    Each replicate is ``a(u, v) - C1 a(u, 1) - C2 a(1, v)`` where ``a`` is the
    multiplier process built from centered standard normal weights. A fixed
    ``(B, n)`` matrix of ``multipliers`` may be supplied instead of a seed.
    """
    if B < 1:
        raise InvalidInputError("B must be at least 1")
    pairs = _pairs_of(source, edge)
    pts, _ = _points(points)
    C1 = ranks.partial_derivative_estimate(pairs, pts, axis="first")
    C2 = ranks.partial_derivative_estimate(pairs, pts, axis="second")
    xi = _multipliers(B, pairs.n, seed, multipliers)
    values = np.concatenate([_process_replicates(pairs, pts, xi[s], C1, C2)
                             for s in _batches(B, pairs.n * len(pts))])
    return BootstrapEnsemble(values, pts, seed)


def _batches(B, work):
    step = max(1, 20_000_000 // max(work, 1))
    for start in range(0, B, step):
        yield slice(start, min(start + step, B))


def _interval(estimate, ens_values, alpha, method, n, sigma=None):
    if not 0 < alpha < 1:
        raise InvalidInputError("alpha must lie in (0, 1)")
    root = np.sqrt(n)
    if method == "percentile":
        q_lo, q_hi = np.quantile(ens_values, [alpha / 2, 1 - alpha / 2])
    elif method in ("symmetric", "symmetric-normal", "plug-in"):
        if method != "plug-in":
            sigma = float(np.std(ens_values, ddof=1)) if len(ens_values) > 1 else 0.0
        z = stats.norm.ppf(1 - alpha / 2)
        q_lo, q_hi = -z * sigma, z * sigma
    else:
        raise InvalidInputError(f"unknown interval method {method!r}")
    if q_hi == q_lo:
        warnings.warn("degenerate resampling distribution: zero-width interval", stacklevel=3)
    method = "symmetric-normal" if method == "symmetric" else method
    return ConfidenceInterval(float(estimate - q_hi / root), float(estimate - q_lo / root),
                              1 - alpha, method, float(estimate))


def confidence_interval(fitted, edge, point, alpha: float = 0.1, B: int = 1000,
                        method: str = "percentile", seed=None,
                        ensemble: BootstrapEnsemble | None = None) -> ConfidenceInterval:
    """Two-sided interval for the pair-copula of ``edge`` at ``point``.

    ``method`` is ``"percentile"``, ``"symmetric-normal"`` (ensemble sd) or
    ``"plug-in"`` (sd from :func:`plugin_variance`).
    """
    pairs = _pairs_of(fitted, edge)
    estimate = ranks.empirical_copula(pairs, point)
    if method == "plug-in":
        src = fitted if edge is not None else pairs
        sigma = np.sqrt(plugin_variance(src, edge, point) if edge is not None
                        else _pair_plugin_variance(pairs, point))
        return _interval(estimate, np.zeros(1), alpha, method, pairs.n, sigma)
    if ensemble is None:
        ensemble = multiplier_resample(pairs, points=[point], B=B, seed=seed)
    return _interval(estimate, ensemble.values[:, 0], alpha, method, pairs.n)


def _pair_plugin_variance(pairs, point):
    C = ranks.empirical_copula(pairs, point)
    C1 = ranks.partial_derivative_estimate(pairs, point, axis="first")
    C2 = ranks.partial_derivative_estimate(pairs, point, axis="second")
    return asymptotic_variance(C, C1, C2, point[0], point[1])


# ----------------------------------------------------------------------
# Spearman's rho

def spearman_rho(fitted, edge=None) -> float:
    """Sample Spearman correlation of the edge's pseudo-observations."""
    pairs = _pairs_of(fitted, edge)
    return ranks.spearman_from_pseudo(pairs.u, pairs.v)


def spearman_plugin(fitted, edge=None, grid: int = 64) -> float:
    """``12 * int C_hat - 3`` by the midpoint rule on a ``grid`` x ``grid`` mesh."""
    pairs = _pairs_of(fitted, edge)
    g = (np.arange(grid) + 0.5) / grid
    pts = np.column_stack([np.repeat(g, grid), np.tile(g, grid)])
    return float(12.0 * ranks.empirical_copula(pairs, pts).mean() - 3.0)


def spearman_resample(fitted, edge=None, B: int = 1000, seed=None, grid: int = 64,
                      integration: str = "midpoint", multipliers=None) -> np.ndarray:
    """Resampled limits ``12 * int C_n`` of the Spearman functional, length ``B``.

    ``integration="midpoint"`` uses a regular ``grid`` x ``grid`` mesh;
    ``"mc"`` uses ``grid**2`` uniform points drawn from the seed.
    """
    pairs = _pairs_of(fitted, edge)
    if integration == "midpoint":
        g = (np.arange(grid) + 0.5) / grid
        pts = np.column_stack([np.repeat(g, grid), np.tile(g, grid)])
    elif integration == "mc":
        # child B of the seed; the multipliers use children 0..B-1
        ss = seed_sequence(seed)
        stream = np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, B))
        pts = np.random.default_rng(stream).random((grid * grid, 2))
    else:
        raise InvalidInputError("integration must be 'midpoint' or 'mc'")
    C1 = ranks.partial_derivative_estimate(pairs, pts, axis="first")
    C2 = ranks.partial_derivative_estimate(pairs, pts, axis="second")
    xi = _multipliers(B, pairs.n, seed, multipliers)
    out = np.empty(B)
    for sl in _batches(B, pairs.n * len(pts)):
        out[sl] = 12.0 * _process_replicates(pairs, pts, xi[sl], C1, C2).mean(axis=1)
    return out


def spearman_variance(fitted, edge=None, B: int = 1000, seed=None, **kw) -> float:
    return float(np.var(spearman_resample(fitted, edge, B, seed, **kw), ddof=1))


def spearman_ci(fitted, edge=None, alpha: float = 0.1, B: int = 1000, seed=None,
                method: str = "percentile", replicates=None, **kw) -> ConfidenceInterval:
    """Interval for the edge's Spearman rho from multiplier replicates."""
    pairs = _pairs_of(fitted, edge)
    if method == "plug-in":
        raise InvalidInputError("no plug-in variance for Spearman's rho; use percentile "
                                "or symmetric-normal")
    if replicates is None:
        replicates = spearman_resample(pairs, None, B, seed, **kw)
    return _interval(spearman_rho(pairs), replicates, alpha, method, pairs.n)


# ----------------------------------------------------------------------
# conditional independence

def independence_statistic(fitted, edge=None) -> float:
    """Cramer-von Mises statistic ``sum_t (C_hat(U_t, V_t) - U_t V_t)^2``."""
    pairs = _pairs_of(fitted, edge)
    emp = ranks.dominance_fraction(pairs.u, pairs.v)
    return float(np.sum((emp - pairs.u * pairs.v) ** 2))


@lru_cache(maxsize=32)
def _independence_null(n: int, replicates: int, seed) -> np.ndarray:
    children = seed_sequence(seed).spawn(replicates)
    grid = np.arange(1, n + 1) / (n + 1.0)
    out = np.empty(replicates)
    for r, child in enumerate(children):
        rng = np.random.default_rng(child)
        v = rng.permutation(grid)
        out[r] = independence_statistic(PairSample(grid, v, 0.25))
    out.setflags(write=False)
    return out


def independence_null(n: int, replicates: int = 2000, seed=0) -> np.ndarray:
    """Null distribution of the statistic for tie-free ranks of independent pairs.

    The statistic is rank based, so one table serves every edge and level;
    tables are cached by ``(n, replicates, seed)``.
    """
    if replicates < 1:
        raise InvalidInputError("replicates must be positive")
    return _independence_null(int(n), int(replicates), seed)


def _mc_result(stat, null) -> TestResult:
    p = (1.0 + np.sum(null >= stat)) / (len(null) + 1.0)
    crit = {a: float(np.quantile(null, 1 - a)) for a in LEVELS}
    return TestResult(float(stat), float(p), crit, len(null))


def independence_test(fitted, edge=None, replicates: int = 2000, seed=0) -> TestResult:
    """Cramer-von Mises test that the edge's pair-copula is the independence copula."""
    if replicates < 100:
        raise InvalidInputError("use at least 100 Monte Carlo replicates")
    pairs = _pairs_of(fitted, edge)
    return _mc_result(independence_statistic(pairs), independence_null(pairs.n, replicates, seed))


# ----------------------------------------------------------------------
# goodness of fit

def gof_statistic(pairs: PairSample, copula: PairCopula) -> float:
    """``n * int (C_hat - C_theta)^2 dC_hat`` as a sum over the sample points."""
    emp = ranks.dominance_fraction(pairs.u, pairs.v)
    return float(np.sum((emp - copula.cdf(pairs.u, pairs.v)) ** 2))


def _fit_family(cls, u, v):
    try:
        return cls.fit(u, v)
    except (EstimationError, FloatingPointError, ValueError) as exc:
        raise EstimationError(f"{cls.family} fit failed: {exc}") from exc


GOF_BOOTSTRAPS = ("pipeline", "pair")


def ancestor_vine(vine: RegularVine, edge):
    """The regular vine formed by ``edge`` and every edge below it.

    Variables are renumbered ``0..m-1`` in increasing order; returns the
    sub-vine, the original column indices and a map from sub-vine edge keys
    to the original keys.
    """
    edge = vine.edge(edge)
    union = edge.complete_union
    cols = sorted(union)
    idx = {k: r for r, k in enumerate(cols)}
    levels, back = [], {}
    for tree in vine.trees[:edge.level]:
        keys = []
        for e in tree:
            if e.complete_union <= union:
                key = (idx[e.i], idx[e.j], frozenset(idx[k] for k in e.conditioning))
                keys.append(key)
                back[key] = e.key
        levels.append(keys)
    return RegularVine.from_labels(len(cols), levels), cols, back


def _pipeline_null(fitted: FittedEmpiricalVine, edge, cls, replicates, seed):
    # simulate the ancestors of the edge from stepwise fits of the null family
    # and push every resample through the same estimator
    sub, _, back = ancestor_vine(fitted.vine, edge)
    copulas = {key: _fit_family(cls, *_uv(fitted.estimate(orig).pairs))
               for key, orig in back.items()}
    model = ParametricVineModel(sub, copulas)
    top = sub.tree(sub.d - 1)[0]
    null = np.empty(replicates)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for r, child in enumerate(seed_sequence(seed).spawn(replicates)):
            star_fit = estimator.fit(model.sample(fitted.n, child), sub, fitted.bandwidth,
                                     ties=fitted.ties)
            pairs = star_fit.estimate(top).pairs
            null[r] = gof_statistic(pairs, _fit_family(cls, pairs.u, pairs.v))
    return null


def _uv(pairs):
    return pairs.u, pairs.v


def _pair_null(pairs: PairSample, cop, cls, replicates, seed):
    null = np.empty(replicates)
    for r, child in enumerate(seed_sequence(seed).spawn(replicates)):
        sim = cop.sample(pairs.n, np.random.default_rng(child))
        u = ranks.normalized_ranks(sim[:, 0])
        v = ranks.normalized_ranks(sim[:, 1])
        star = _fit_family(cls, u, v)
        null[r] = gof_statistic(PairSample(u, v, pairs.h), star)
    return null


def gof_test(fitted, edge=None, family: str = "gaussian", replicates: int = 200,
             seed=0, bootstrap: str = "pipeline") -> TestResult:
    """Cramer-von Mises goodness-of-fit test of a parametric family for one edge.

    The parameter is fitted by pseudo-likelihood on the edge's
    pseudo-observations. With ``bootstrap="pipeline"`` every edge below the
    tested one is also fitted in the null family, samples are drawn from
    that parametric vine and run through the whole estimator, so the null
    distribution includes the noise of the conditional pseudo-observations.
    ``bootstrap="pair"`` draws from the fitted pair-copula alone and uses
    plain normalized ranks; it is the only choice for a bare PairSample and
    coincides with the pipeline on ground-level edges.
    """
    cls = family_class(family)
    if cls is IndependenceCopula:
        raise InvalidInputError("use independence_test for the independence copula")
    if replicates < 1:
        raise InvalidInputError("replicates must be positive")
    if bootstrap not in GOF_BOOTSTRAPS:
        raise InvalidInputError(f"bootstrap must be one of {GOF_BOOTSTRAPS}")
    pairs = _pairs_of(fitted, edge)
    cop = _fit_family(cls, pairs.u, pairs.v)
    stat = gof_statistic(pairs, cop)
    if (bootstrap == "pipeline" and isinstance(fitted, FittedEmpiricalVine)
            and fitted.vine.edge(edge).level > 1):
        null = _pipeline_null(fitted, edge, cls, replicates, seed)
    else:
        null = _pair_null(pairs, cop, cls, replicates, seed)
    return _mc_result(stat, null)


# ----------------------------------------------------------------------
# expansion check

def process_value(pairs: PairSample, copula: PairCopula, point) -> float:
    """``sqrt(n) (C_hat - C)`` at ``point`` for a known pair-copula ``C``."""
    u, v = point
    return float(np.sqrt(pairs.n) * (ranks.empirical_copula(pairs, point) - copula.cdf(u, v)))


def expansion_value(true_u, true_v, copula: PairCopula, point) -> float:
    """Right-hand side of the linear expansion built from the true conditional cdfs."""
    u, v = point
    true_u = np.asarray(true_u, dtype=float)
    true_v = np.asarray(true_v, dtype=float)
    n = true_u.shape[0]
    C = copula.cdf(u, v)
    C1, C2 = copula.h(v, u), copula.h(u, v)
    iu = true_u <= u
    iv = true_v <= v
    root = np.sqrt(n)
    return float((np.sum(iu & iv) - n * C) / root - C1 * (np.sum(iu) - n * u) / root
                 - C2 * (np.sum(iv) - n * v) / root)


def expansion_residual(fitted, edge, point, oracle, copula: PairCopula) -> float:
    """``|C_n(point) - expansion|`` for one replicate.

    ``oracle`` is the pair of true conditional cdf vectors of the edge, e.g.
    one entry of :meth:`ParametricVineModel.conditional_values`.
    """
    if oracle is None:
        raise InvalidInputError("the expansion needs the true conditional cdfs")
    pairs = _pairs_of(fitted, edge)
    lhs = process_value(pairs, copula, point)
    rhs = expansion_value(oracle[0], oracle[1], copula, point)
    return abs(lhs - rhs)
