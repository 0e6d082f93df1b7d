"""Rank transforms, empirical copulas and finite-difference conditional cdfs.

Everything here works on the uniform rank scale. Indicator sums are
accumulated as integers and divided once, so results do not depend on
summation order.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .exceptions import EstimationError, InvalidInputError

# Chunk size for (n x m) broadcast comparisons, in matrix elements.
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class Bandwidth:
    """Rule mapping a sample size to the half-width of the rank window.

    ``rule`` is one of ``"half-cuberoot"`` (0.5 n^-1/3, the default),
    ``"fifthroot"`` (n^-1/5), ``"quarterroot"`` (n^-1/4) or ``"fixed"``.
    """

    rule: str = "half-cuberoot"
    value: float | None = None

    _RULES = ("half-cuberoot", "fifthroot", "quarterroot", "fixed")

    def __post_init__(self):
        if self.rule not in self._RULES:
            raise InvalidInputError(f"unknown bandwidth rule {self.rule!r}")
        if self.rule == "fixed":
            if self.value is None or not 0.0 < self.value < 0.5:
                raise InvalidInputError("fixed bandwidth must lie in (0, 1/2)")

    @classmethod
    def parse(cls, text: str) -> "Bandwidth":
        """Parse ``half-cuberoot``, ``fifthroot``, ``quarterroot`` or ``fixed=<h>``."""
        text = text.strip().lower()
        m = re.fullmatch(r"fixed=([0-9.eE+-]+)", text)
        if m:
            return cls("fixed", float(m.group(1)))
        return cls(text)

    def resolve(self, n: int) -> float:
        if n < 1:
            raise InvalidInputError("sample size must be positive")
        if self.rule == "fixed":
            return float(self.value)
        if self.rule == "half-cuberoot":
            h = 0.5 * n ** (-1.0 / 3.0)
        elif self.rule == "fifthroot":
            h = n ** (-1.0 / 5.0)
        else:
            h = n ** (-1.0 / 4.0)
        # n^-1/5 and n^-1/4 exceed 1/2 only for tiny n
        return float(min(h, 0.5 - 1e-12))

    def __str__(self):
        return f"fixed={self.value}" if self.rule == "fixed" else self.rule


@dataclass(frozen=True)
class PairSample:
    """Paired pseudo-observations of one vine edge plus the window half-width."""

    u: np.ndarray
    v: np.ndarray
    h: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.ndim != 1 or u.shape != v.shape:
            raise InvalidInputError("u and v must be 1-d arrays of equal length")
        if not self.h > 0:
            raise InvalidInputError("bandwidth must be positive")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "h", float(self.h))

    @property
    def n(self) -> int:
        return self.u.shape[0]


def normalized_ranks(x) -> np.ndarray:
    """Return ``sum_s I(x_s <= x_t) / (n + 1)`` for every t.

    Ties share the largest rank of their group, which is the literal
    indicator definition (no midranks).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidInputError("normalized_ranks expects a 1-d vector")
    n = x.shape[0]
    if n < 2:
        raise InvalidInputError("need at least two observations to rank")
    if np.isnan(x).any():
        raise InvalidInputError("cannot rank NaN values")
    counts = np.searchsorted(np.sort(x), x, side="right")
    return counts / (n + 1.0)


def tie_broken_ranks(x, secondary) -> np.ndarray:
    """Normalized ranks of ``x`` with ties ordered by ``secondary``, then by position.

    Always a permutation of ``1/(n+1), ..., n/(n+1)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise InvalidInputError("need at least two observations to rank")
    order = np.lexsort((np.arange(n), np.asarray(secondary, dtype=float), x))
    out = np.empty(n)
    out[order] = np.arange(1, n + 1) / (n + 1.0)
    return out


def pseudo_observations(data) -> np.ndarray:
    """Columnwise normalized ranks of an (n, d) matrix."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise InvalidInputError("data must be a 2-d array")
    return np.column_stack([normalized_ranks(col) for col in data.T])


def count_ties(x) -> int:
    """Number of observations sharing their value with another one."""
    _, counts = np.unique(np.asarray(x), return_counts=True)
    return int(counts[counts > 1].sum())


def _as_points(point):
    pts = np.asarray(point, dtype=float)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 2:
        raise InvalidInputError("points must have two coordinates")
    return pts, scalar


def _chunks(n, m):
    step = max(1, _CHUNK_ELEMENTS // max(n, 1))
    for start in range(0, m, step):
        yield slice(start, min(start + step, m))


def empirical_copula(pairs: PairSample, point):
    """Empirical copula ``(1/n) sum_t I(u_t <= a, v_t <= b)``.

    ``point`` is a pair ``(a, b)`` or an (m, 2) array of pairs.
    """
    pts, scalar = _as_points(point)
    out = np.empty(len(pts))
    for sl in _chunks(pairs.n, len(pts)):
        a = pts[sl, 0][:, None]
        b = pts[sl, 1][:, None]
        hits = (pairs.u[None, :] <= a) & (pairs.v[None, :] <= b)
        out[sl] = hits.sum(axis=1) / pairs.n
    return out[0] if scalar else out


def partial_derivative_estimate(pairs: PairSample, point, axis: str = "second"):
    """Finite-difference estimate of a partial derivative of the empirical copula.

    ``axis="second"`` gives the conditional cdf of the first coordinate given
    the second one lies within ``h`` of ``b``; ``axis="first"`` mirrors the
    roles. There is no explicit boundary correction: the window count shrinks
    near 0 and 1 and the ratio stays in [0, 1].
    """
    if axis not in ("first", "second"):
        raise InvalidInputError("axis must be 'first' or 'second'")
    pts, scalar = _as_points(point)
    if axis == "second":
        level, window, at_level, at_window = pairs.u, pairs.v, pts[:, 0], pts[:, 1]
    else:
        level, window, at_level, at_window = pairs.v, pairs.u, pts[:, 1], pts[:, 0]
    out = np.empty(len(pts))
    for sl in _chunks(pairs.n, len(pts)):
        inside = np.abs(window[None, :] - at_window[sl, None]) <= pairs.h
        den = inside.sum(axis=1)
        if (den == 0).any():
            bad = at_window[sl][den == 0][0]
            raise EstimationError(
                f"empty finite-difference window at {bad!r} with h={pairs.h!r}"
            )
        num = (inside & (level[None, :] <= at_level[sl, None])).sum(axis=1)
        out[sl] = num / den
    return out[0] if scalar else out


def conditional_cdf_estimate(pairs: PairSample, point):
    """Estimate of P(U <= a | V = b): the ``axis="second"`` partial derivative."""
    return partial_derivative_estimate(pairs, point, axis="second")


def _window_bounds(sorted_w, centers, h):
    """Index range [lo, hi) of ``sorted_w`` with ``|w - c| <= h``, per center.

    Uses the same floating-point predicate as the direct estimator so the
    fast and direct paths agree bit for bit.
    """
    n = sorted_w.shape[0]
    lo = np.searchsorted(sorted_w, centers - h, side="left")
    while True:
        cand = np.clip(lo - 1, 0, n - 1)
        move = (lo > 0) & (np.abs(sorted_w[cand] - centers) <= h)
        if not move.any():
            break
        lo = np.where(move, np.searchsorted(sorted_w, sorted_w[cand], side="left"), lo)
    while True:
        cand = np.clip(lo, 0, n - 1)
        move = (lo < n) & ~(np.abs(sorted_w[cand] - centers) <= h)
        if not move.any():
            break
        lo = np.where(move, np.searchsorted(sorted_w, sorted_w[cand], side="right"), lo)

    hi = np.searchsorted(sorted_w, centers + h, side="right")
    while True:
        cand = np.clip(hi, 0, n - 1)
        move = (hi < n) & (np.abs(sorted_w[cand] - centers) <= h)
        if not move.any():
            break
        hi = np.where(move, np.searchsorted(sorted_w, sorted_w[cand], side="right"), hi)
    while True:
        cand = np.clip(hi - 1, 0, n - 1)
        move = (hi > 0) & ~(np.abs(sorted_w[cand] - centers) <= h)
        if not move.any():
            break
        hi = np.where(move, np.searchsorted(sorted_w, sorted_w[cand], side="left"), hi)
    return lo, hi


def conditional_cdf_at_samples(u, v, h) -> np.ndarray:
    """Conditional cdf estimate of ``u_t`` given ``v_t`` at every sample point.

    Equivalent to ``conditional_cdf_estimate(PairSample(u, v, h), zip(u, v))``
    but costs O(n * window) instead of O(n^2): after sorting by ``v`` every
    window is a contiguous slice.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = u.shape[0]
    order = np.argsort(v, kind="stable")
    vs = v[order]
    us = u[order]
    lo, hi = _window_bounds(vs, v, h)
    den = hi - lo
    # each point lies in its own window
    assert (den > 0).all()
    width = int(den.max())
    num = np.empty(n, dtype=np.int64)
    offsets = np.arange(width)
    step = max(1, _CHUNK_ELEMENTS // width)
    for start in range(0, n, step):
        sl = slice(start, min(start + step, n))
        idx = lo[sl, None] + offsets[None, :]
        valid = idx < hi[sl, None]
        np.minimum(idx, n - 1, out=idx)
        num[sl] = ((us[idx] <= u[sl, None]) & valid).sum(axis=1)
    return num / den


def dominance_fraction(u, v) -> np.ndarray:
    """Empirical copula of the pairs evaluated at each of its own points."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = u.shape[0]
    out = np.empty(n)
    for sl in _chunks(n, n):
        hits = (u[None, :] <= u[sl, None]) & (v[None, :] <= v[sl, None])
        out[sl] = hits.sum(axis=1) / n
    return out


def spearman_from_pseudo(u, v) -> float:
    """Sample Spearman correlation: Pearson correlation of the rank vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    du = u - u.mean()
    dv = v - v.mean()
    den = np.sqrt((du * du).sum() * (dv * dv).sum())
    if den == 0:
        return 0.0
    return float(np.clip((du * dv).sum() / den, -1.0, 1.0))
