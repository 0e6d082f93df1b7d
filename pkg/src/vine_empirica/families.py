"""Parametric bivariate copulas used by the simulator and the goodness-of-fit test.

All families here are exchangeable, so ``h(u, v) = dC/dv (u, v)`` serves both
conditioning directions. ``h(u, v)`` is P(U <= u | V = v).
"""
from __future__ import annotations

import numpy as np
from scipy import optimize, special
from scipy.integrate import quad

from .exceptions import ConvergenceError, EstimationError, InvalidInputError

EPS = 1e-12

# Gauss-Legendre nodes on (0, 1) for population Spearman integrals
_GL_X, _GL_W = np.polynomial.legendre.leggauss(200)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _clamp(x):
    return np.clip(np.asarray(x, dtype=float), EPS, 1.0 - EPS)


def _norm_ppf(u):
    return special.ndtri(_clamp(u))


def _scalar_or_array(out, *args):
    if all(np.ndim(a) == 0 for a in args):
        return float(out)
    return out


class PairCopula:
    """Base class; subclasses implement ``_cdf``, ``_logpdf``, ``_h`` and ``_hinv``."""

    family = "base"

    def params(self) -> dict:
        return {}

    def cdf(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        out = np.asarray(self._cdf(u, v), dtype=float)
        # exact margins at the boundary of the square
        out = np.where((u <= 0) | (v <= 0), 0.0, out)
        out = np.where(u >= 1, np.where(v >= 1, 1.0, np.clip(v, 0, 1)), out)
        out = np.where((v >= 1) & (u < 1), np.clip(u, 0, 1), out)
        return _scalar_or_array(out, u, v)

    def logpdf(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        return _scalar_or_array(np.asarray(self._logpdf(_clamp(u), _clamp(v))), u, v)

    def pdf(self, u, v):
        out = np.exp(self.logpdf(u, v))
        return out

    def h(self, u, v):
        """Conditional cdf of the first argument given the second: dC/dv."""
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        out = np.asarray(self._h(_clamp(u), _clamp(v)), dtype=float)
        out = np.where(u <= 0, 0.0, np.where(u >= 1, 1.0, out))
        return _scalar_or_array(np.clip(out, 0.0, 1.0), u, v)

    def hinv(self, p, v):
        """Inverse of ``h`` in its first argument."""
        p, v = np.broadcast_arrays(np.asarray(p, float), np.asarray(v, float))
        out = np.asarray(self._hinv(_clamp(p), _clamp(v)), dtype=float)
        return _scalar_or_array(np.clip(out, 0.0, 1.0), p, v)

    def sample(self, n: int, rng) -> np.ndarray:
        """(n, 2) sample drawn by inverting ``h``."""
        rng = np.random.default_rng(rng)
        w = rng.random((n, 2))
        v = w[:, 1]
        return np.column_stack([self.hinv(w[:, 0], v), v])

    def spearman_rho(self) -> float:
        """Population Spearman correlation ``12 * int C - 3`` by tensor quadrature."""
        uu, vv = np.meshgrid(_GL_X, _GL_X, indexing="ij")
        return 12.0 * float((np.outer(_GL_W, _GL_W) * self.cdf(uu, vv)).sum()) - 3.0

    def _spearman_from_h(self) -> float:
        # int_0^1 C(u, v) dv = int_0^1 (1 - s) h(u | s) ds; for families without a cheap cdf
        uu, ss = np.meshgrid(_GL_X, _GL_X, indexing="ij")
        ww = np.outer(_GL_W, _GL_W)
        return 12.0 * float((ww * (1.0 - ss) * self.h(uu, ss)).sum()) - 3.0

    def to_dict(self) -> dict:
        return {"family": self.family, "params": self.params()}

    def __eq__(self, other):
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self):
        return hash((self.family, tuple(sorted(self.params().items()))))

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"

    @classmethod
    def fit(cls, u, v) -> "PairCopula":
        """Maximum pseudo-likelihood fit on pseudo-observations."""
        raise NotImplementedError


class IndependenceCopula(PairCopula):
    family = "independence"

    def _cdf(self, u, v):
        return np.clip(u, 0, 1) * np.clip(v, 0, 1)

    def _logpdf(self, u, v):
        return np.zeros(np.broadcast(u, v).shape)

    def _h(self, u, v):
        return u + 0.0 * v

    def _hinv(self, p, v):
        return p + 0.0 * v

    def spearman_rho(self):
        return 0.0

    @classmethod
    def fit(cls, u, v):
        return cls()


class GaussianCopula(PairCopula):
    family = "gaussian"

    def __init__(self, rho: float):
        rho = float(rho)
        if not -1.0 < rho < 1.0:
            raise InvalidInputError(f"Gaussian correlation must lie in (-1, 1), got {rho}")
        self.rho = rho

    def params(self):
        return {"rho": self.rho}

    def _cdf(self, u, v):
        x = _norm_ppf(u)
        y = _norm_ppf(v)
        return bivariate_normal_cdf(x, y, self.rho)

    def _logpdf(self, u, v):
        x = _norm_ppf(u)
        y = _norm_ppf(v)
        r = self.rho
        s = 1.0 - r * r
        return -0.5 * np.log(s) - (r * r * (x * x + y * y) - 2.0 * r * x * y) / (2.0 * s)

    def _h(self, u, v):
        x = _norm_ppf(u)
        y = _norm_ppf(v)
        return special.ndtr((x - self.rho * y) / np.sqrt(1.0 - self.rho ** 2))

    def _hinv(self, p, v):
        z = _norm_ppf(p)
        y = _norm_ppf(v)
        return special.ndtr(z * np.sqrt(1.0 - self.rho ** 2) + self.rho * y)

    def spearman_rho(self):
        return 6.0 / np.pi * np.arcsin(self.rho / 2.0)

    @classmethod
    def fit(cls, u, v):
        x = _norm_ppf(u)
        y = _norm_ppf(v)
        sxx, syy, sxy = (x * x).sum(), (y * y).sum(), (x * y).sum()
        n = x.shape[0]

        def nll(r):
            s = 1.0 - r * r
            return 0.5 * n * np.log(s) + (r * r * (sxx + syy) - 2.0 * r * sxy) / (2.0 * s)

        res = optimize.minimize_scalar(nll, bounds=(-0.999, 0.999), method="bounded",
                                       options={"xatol": 1e-7})
        if not res.success:
            raise EstimationError("Gaussian pseudo-likelihood fit failed")
        return cls(res.x)


def bivariate_normal_cdf(x, y, rho):
    """Standard bivariate normal cdf via Owen's T function."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    s = np.sqrt(1.0 - rho * rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        ax = (y - rho * x) / (x * s)
        ay = (x - rho * y) / (y * s)
        out = 0.5 * special.ndtr(x) + 0.5 * special.ndtr(y) \
            - special.owens_t(x, ax) - special.owens_t(y, ay)
    prod = x * y
    beta = np.where((prod > 0) | ((prod == 0) & (x + y >= 0)), 0.0, 0.5)
    out = out - beta
    both_zero = (x == 0) & (y == 0)
    out = np.where(both_zero, 0.25 + np.arcsin(rho) / (2.0 * np.pi), out)
    # infinities from clamped margins
    out = np.where(np.isneginf(x) | np.isneginf(y), 0.0, out)
    return np.clip(out, 0.0, 1.0)


class StudentTCopula(PairCopula):
    family = "student-t"

    def __init__(self, rho: float, nu: float):
        rho, nu = float(rho), float(nu)
        if not -1.0 < rho < 1.0:
            raise InvalidInputError(f"t correlation must lie in (-1, 1), got {rho}")
        if not nu > 2.0:
            raise InvalidInputError(f"t degrees of freedom must exceed 2, got {nu}")
        self.rho = rho
        self.nu = nu

    def params(self):
        return {"rho": self.rho, "nu": self.nu}

    def _q(self, u):
        return special.stdtrit(self.nu, _clamp(u))

    def _h(self, u, v):
        x, y = self._q(u), self._q(v)
        nu, r = self.nu, self.rho
        scale = np.sqrt((nu + y * y) * (1.0 - r * r) / (nu + 1.0))
        return special.stdtr(nu + 1.0, (x - r * y) / scale)

    def _hinv(self, p, v):
        y = self._q(v)
        nu, r = self.nu, self.rho
        scale = np.sqrt((nu + y * y) * (1.0 - r * r) / (nu + 1.0))
        x = special.stdtrit(nu + 1.0, p) * scale + r * y
        return special.stdtr(nu, x)

    def _logpdf(self, u, v):
        x, y = self._q(u), self._q(v)
        nu, r = self.nu, self.rho
        s = 1.0 - r * r
        const = (special.gammaln((nu + 2.0) / 2.0) + special.gammaln(nu / 2.0)
                 - 2.0 * special.gammaln((nu + 1.0) / 2.0) - 0.5 * np.log(s))
        quad_form = (x * x + y * y - 2.0 * r * x * y) / (nu * s)
        return (const - 0.5 * (nu + 2.0) * np.log1p(quad_form)
                + 0.5 * (nu + 1.0) * (np.log1p(x * x / nu) + np.log1p(y * y / nu)))

    def spearman_rho(self):
        return self._spearman_from_h()

    def _cdf(self, u, v):
        # C(u, v) = int_0^v h(u | s) ds; no closed form for the bivariate t
        def one(a, b):
            if a <= 0 or b <= 0:
                return 0.0
            val, _ = quad(lambda s: float(self._h(np.float64(min(a, 1 - EPS)), s)),
                          0.0, min(b, 1.0), epsabs=1e-13, epsrel=1e-12, limit=200)
            return val

        return np.vectorize(one, otypes=[float])(u, v)

    @classmethod
    def fit(cls, u, v, nu_grid=range(3, 31)):
        best = None
        for nu in nu_grid:
            def nll(r, nu=nu):
                return -float(np.sum(cls(r, nu)._logpdf(_clamp(u), _clamp(v))))

            res = optimize.minimize_scalar(nll, bounds=(-0.995, 0.995), method="bounded",
                                           options={"xatol": 1e-6})
            if best is None or res.fun < best[0]:
                best = (res.fun, res.x, nu)
        if best is None or not np.isfinite(best[0]):
            raise EstimationError("Student t pseudo-likelihood fit failed")
        return cls(best[1], best[2])


class GumbelCopula(PairCopula):
    family = "gumbel"

    def __init__(self, theta: float):
        theta = float(theta)
        if not theta >= 1.0:
            raise InvalidInputError(f"Gumbel parameter must be >= 1, got {theta}")
        self.theta = theta

    def params(self):
        return {"theta": self.theta}

    def _parts(self, u, v):
        x = -np.log(u)
        y = -np.log(v)
        a = x ** self.theta + y ** self.theta
        return x, y, a

    def _cdf(self, u, v):
        _, _, a = self._parts(_clamp(u), _clamp(v))
        return np.exp(-a ** (1.0 / self.theta))

    def _h(self, u, v):
        t = self.theta
        x, y, a = self._parts(u, v)
        c = np.exp(-a ** (1.0 / t))
        return c * a ** (1.0 / t - 1.0) * y ** (t - 1.0) / v

    def _logpdf(self, u, v):
        t = self.theta
        x, y, a = self._parts(u, v)
        a1 = a ** (1.0 / t)
        return (-a1 - np.log(u) - np.log(v) + (t - 1.0) * (np.log(x) + np.log(y))
                + (1.0 / t - 2.0) * np.log(a) + np.log(a1 + t - 1.0))

    def _hinv(self, p, v, max_iter=200):
        # monotone bisection; no closed-form inverse
        lo = np.full(p.shape, EPS)
        hi = np.full(p.shape, 1.0 - EPS)
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            below = self._h(mid, v) < p
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4e-16 * hi):
                break
        else:
            if np.any(hi - lo > 1e-10):
                raise ConvergenceError("Gumbel h-inverse did not converge")
        out = 0.5 * (lo + hi)
        if np.isnan(out).any():
            raise ConvergenceError("Gumbel h-inverse produced NaN")
        return out

    def kendall_tau(self):
        return 1.0 - 1.0 / self.theta

    @classmethod
    def fit(cls, u, v):
        uc, vc = _clamp(u), _clamp(v)

        def nll(t):
            return -float(np.sum(cls(t)._logpdf(uc, vc)))

        res = optimize.minimize_scalar(nll, bounds=(1.0, 30.0), method="bounded",
                                       options={"xatol": 1e-6})
        if not np.isfinite(res.fun):
            raise EstimationError("Gumbel pseudo-likelihood fit failed")
        return cls(max(1.0, res.x))


_FAMILIES = {
    "independence": IndependenceCopula,
    "indep": IndependenceCopula,
    "gaussian": GaussianCopula,
    "normal": GaussianCopula,
    "student-t": StudentTCopula,
    "student": StudentTCopula,
    "t": StudentTCopula,
    "gumbel": GumbelCopula,
}


def family_class(name: str):
    try:
        return _FAMILIES[name.strip().lower()]
    except KeyError:
        raise InvalidInputError(f"unknown copula family {name!r}") from None


def make_copula(family: str, **params) -> PairCopula:
    cls = family_class(family)
    try:
        return cls(**params)
    except TypeError as exc:
        raise InvalidInputError(f"bad parameters {params} for family {family!r}") from exc


def copula_from_dict(obj: dict) -> PairCopula:
    if not isinstance(obj, dict) or "family" not in obj:
        raise InvalidInputError(f"copula spec needs a 'family' key: {obj!r}")
    return make_copula(obj["family"], **obj.get("params", {}))
