"""Parametric vine models: simulation, true conditional cdfs and study schedules."""
from __future__ import annotations

import json
from typing import Mapping

import numpy as np

from .exceptions import InvalidInputError, VineParseError, VineStructureError
from .families import (GaussianCopula, GumbelCopula, IndependenceCopula, PairCopula,
                       StudentTCopula, copula_from_dict, family_class)
from .vine import RegularVine, cvine, dvine, rvine_example, vine_from_dict, vine_to_dict


class ParametricVineModel:
    """A regular vine with one parametric pair-copula per edge.

    The simplifying assumption holds by construction: each pair-copula is a
    fixed bivariate copula applied to conditional cdf values.
    """

    def __init__(self, vine: RegularVine, copulas: Mapping):
        self.vine = vine
        self.copulas = {}
        for ref, cop in copulas.items():
            edge = vine.edge(ref)
            if not isinstance(cop, PairCopula):
                raise InvalidInputError(f"edge {edge.label}: not a pair-copula: {cop!r}")
            self.copulas[edge.key] = cop
        missing = [e.label for e in vine.edges() if e.key not in self.copulas]
        if missing:
            raise InvalidInputError("no copula for edges " + ", ".join(missing))
        self._order = _sampling_order(vine)

    @property
    def d(self) -> int:
        return self.vine.d

    def copula(self, ref) -> PairCopula:
        return self.copulas[self.vine.edge(ref).key]

    # ------------------------------------------------------------------
    def conditional_values(self, u) -> dict:
        """True conditional cdf inputs ``(F_{i|v}, F_{j|v})`` of every edge.

        ``u`` is an (n, d) matrix on the copula scale. Returns a mapping from
        edge key to a pair of length-n arrays.
        """
        u = np.asarray(u, dtype=float)
        store = {(k, frozenset()): u[:, k] for k in range(self.d)}
        out = {}
        for edge in self.vine.edges():
            i, j, v = edge.key
            ui, uj = store[(i, v)], store[(j, v)]
            out[edge.key] = (ui, uj)
            cop = self.copulas[edge.key]
            if edge.level < self.d - 1:
                store[(i, v | {j})] = cop.h(ui, uj)
                store[(j, v | {i})] = cop.h(uj, ui)
        return out

    def sample(self, n: int, seed=None) -> np.ndarray:
        """Draw an (n, d) sample on the copula scale by inverse-h cascades."""
        if n < 1:
            raise InvalidInputError("sample size must be positive")
        rng = np.random.default_rng(seed)
        w = rng.random((n, self.d))
        store = {}
        for step, (var, chain) in enumerate(self._order):
            x = w[:, step]
            if chain:
                top = chain[-1]
                other = top.i if top.j == var else top.j
                store[(var, top.conditioning | {other})] = x
            for edge in reversed(chain):
                other = edge.i if edge.j == var else edge.j
                cond = edge.conditioning
                x = self.copulas[edge.key].hinv(x, store[(other, cond)])
                store[(var, cond)] = x
            store[(var, frozenset())] = x
            # forward pass fills the other direction for later variables
            for edge in chain:
                other = edge.i if edge.j == var else edge.j
                cond = edge.conditioning
                cop = self.copulas[edge.key]
                store[(other, cond | {var})] = cop.h(store[(other, cond)],
                                                     store[(var, cond)])
                store[(var, cond | {other})] = cop.h(store[(var, cond)],
                                                     store[(other, cond)])
        return np.column_stack([store[(k, frozenset())] for k in range(self.d)])

    # ------------------------------------------------------------------
    def to_dict(self) -> dict:
        def extra(edge):
            return self.copulas[edge.key].to_dict()

        return vine_to_dict(self.vine, extra)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, obj) -> "ParametricVineModel":
        vine = vine_from_dict(obj)
        copulas = {}
        for tree in obj["trees"]:
            for row in tree:
                key = (int(row["i"]) - 1, int(row["j"]) - 1,
                       frozenset(int(k) - 1 for k in row.get("v", [])))
                if "family" not in row:
                    raise VineParseError(f"edge {row!r} has no 'family'")
                try:
                    copulas[key] = copula_from_dict(row)
                except InvalidInputError as exc:
                    raise VineParseError(str(exc)) from exc
        return cls(vine, copulas)

    @classmethod
    def from_json(cls, text: str) -> "ParametricVineModel":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise VineParseError(f"line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(obj)


def _sampling_order(vine: RegularVine) -> list:
    """Variables in sampling order, each with its chain of edges by level.

    A variable in the conditioned set of the top edge never appears in a
    conditioning set, so it can be peeled off; the remainder is again a
    regular vine. Peeling repeatedly and reversing gives the order.
    """
    remaining = list(vine.edges())
    variables = set(range(vine.d))
    peeled = []
    while len(variables) > 1:
        top_level = len(variables) - 1
        tops = [e for e in remaining if e.level == top_level]
        if len(tops) != 1:
            raise VineStructureError("cannot derive a sampling order for this vine")
        var = max(tops[0].conditioned)
        chain = sorted((e for e in remaining if var in e.conditioned),
                       key=lambda e: e.level)
        if [e.level for e in chain] != list(range(1, top_level + 1)) or any(
                var in e.conditioning for e in remaining):
            raise VineStructureError("cannot derive a sampling order for this vine")
        remaining = [e for e in remaining if var not in e.conditioned]
        variables.discard(var)
        peeled.append((var, chain))
    peeled.append((variables.pop(), []))
    return peeled[::-1]


def sample_vine(model: ParametricVineModel, n: int, seed=None) -> np.ndarray:
    return model.sample(n, seed)


# ----------------------------------------------------------------------
# simulation-study schedules

def level_parameters(family: str, level: int, rho=0.5, nu=6.0, theta=1.5) -> dict:
    """Parameters of a level-``level`` pair-copula in the study schedule.

    Correlations follow rho / (1 + (level - 1) rho), t degrees of freedom
    grow by one per level and Gumbel parameters stay fixed.
    """
    family = family_class(family).family
    if family == "gaussian":
        return {"rho": rho / (1.0 + (level - 1) * rho)}
    if family == "student-t":
        return {"rho": rho / (1.0 + (level - 1) * rho), "nu": nu + (level - 1)}
    if family == "gumbel":
        return {"theta": theta}
    return {}


def schedule_models(structure: str = "dvine", family: str = "gaussian", rho: float = 0.5,
                    nu: float = 6.0, theta: float = 1.5, d: int = 5,
                    independent_levels=()) -> ParametricVineModel:
    """Build one of the simulation-study models.

    ``structure`` is ``"dvine"`` (order 1..d), ``"cvine"`` (roots 1..d-1) or
    ``"rvine"`` (the five-dimensional example of :func:`rvine_example`).
    Levels listed in ``independent_levels`` get the independence copula.
    """
    if structure == "dvine":
        vine = dvine(range(1, d + 1))
    elif structure == "cvine":
        vine = cvine(range(1, d), d)
    elif structure == "rvine":
        if d != 5:
            raise InvalidInputError("the example regular vine is five-dimensional")
        vine = rvine_example()
    else:
        raise InvalidInputError(f"unknown structure {structure!r}")
    cls = family_class(family)
    if cls is StudentTCopula and not nu > 2:
        raise InvalidInputError("t degrees of freedom must exceed 2")
    if cls in (GaussianCopula, StudentTCopula) and not -1 < rho < 1:
        raise InvalidInputError("correlation must lie in (-1, 1)")
    if cls is GumbelCopula and theta < 1:
        raise InvalidInputError("Gumbel parameter must be >= 1")
    copulas = {}
    for edge in vine.edges():
        if edge.level in independent_levels or cls is IndependenceCopula:
            copulas[edge.key] = IndependenceCopula()
        else:
            copulas[edge.key] = cls(**level_parameters(family, edge.level, rho, nu, theta))
    return ParametricVineModel(vine, copulas)
