"""Structure selection: level-wise maximum spanning trees on |Spearman rho|.

Conditional pseudo-observations are propagated only through the edges that
were selected, so each level's candidates depend on the trees below it.
"""
from __future__ import annotations

import io
import csv
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import stats

from . import ranks
from .estimator import (FittedEmpiricalVine, TIE_RULES, _check_n, _ground_store,
                        edge_pairs, make_estimate, propagate)
from .exceptions import InvalidInputError, VineStructureError
from .ranks import Bandwidth
from .vine import RegularVine, VineEdge, _label_from_unions

MEASURES = ("spearman", "kendall")


@dataclass
class CandidateEdge:
    """An admissible edge of one level with its selection weight."""

    edge: VineEdge
    weight: float
    rho_s: float
    chosen: bool = False

    @property
    def label(self) -> str:
        return self.edge.label


@dataclass
class SelectionTrace:
    """Per level: all candidates with weights, and the total chosen weight."""

    levels: list = field(default_factory=list)
    pruned: list = field(default_factory=list)

    def total_weight(self, level: int) -> float:
        return float(sum(c.weight for c in self.levels[level - 1] if c.chosen))

    def rows(self):
        for level, cands in enumerate(self.levels, start=1):
            for c in cands:
                yield level, c.label, c.weight, c.chosen

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "edge", "weight", "chosen"])
        for level, label, weight, chosen in self.rows():
            w.writerow([level, label, f"{weight:.10g}", int(chosen)])
        return buf.getvalue()


def possible_pairs(previous_tree, level: int | None = None) -> list:
    """Edges that may join two members of ``previous_tree``.

    ``previous_tree`` is a sequence of :class:`VineEdge`, or an int ``d`` for
    the ground level (all variable pairs). Members may be joined only when
    they share a node; the returned edges carry derived labels and parent
    indices into ``previous_tree``.
    """
    if isinstance(previous_tree, (int, np.integer)):
        d = int(previous_tree)
        return [VineEdge((i, j), frozenset(), 1, (i, j)) for i, j in combinations(range(d), 2)]
    prev = list(previous_tree)
    if level is None:
        level = prev[0].level + 1 if prev else 2
    out = []
    for a, b in combinations(range(len(prev)), 2):
        ea, eb = prev[a], prev[b]
        if level == 2:
            shared = set(ea.conditioned) & set(eb.conditioned)
        else:
            shared = set(ea.parents) & set(eb.parents)
        if not shared:
            continue
        conditioned, conditioning = _label_from_unions(ea.complete_union, eb.complete_union)
        if len(conditioned) != 2:
            continue
        out.append(VineEdge(conditioned, frozenset(conditioning), level, (a, b)))
    return out


def max_spanning_tree(n_nodes: int, edges, tie_keys=None) -> list:
    """Indices of a maximum-weight spanning tree (Kruskal).

    ``edges`` is a sequence of ``(a, b, weight)``. Equal weights are ordered
    by ``tie_keys`` (default: the edge position), so the result is
    deterministic.
    """
    edges = list(edges)
    if tie_keys is None:
        tie_keys = list(range(len(edges)))
    weights = np.array([float(w) for _, _, w in edges])
    if np.isnan(weights).any():
        raise InvalidInputError("spanning-tree weights contain NaN")
    order = sorted(range(len(edges)), key=lambda k: (-weights[k], tie_keys[k]))
    parent = list(range(n_nodes))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    chosen = []
    for k in order:
        a, b, _ = edges[k]
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            chosen.append(k)
            if len(chosen) == n_nodes - 1:
                break
    if len(chosen) != n_nodes - 1:
        raise VineStructureError("candidate graph is disconnected")
    return sorted(chosen)


def _weight(u, v, measure):
    if measure == "spearman":
        rho = ranks.spearman_from_pseudo(u, v)
        return abs(rho), rho
    tau = stats.kendalltau(u, v).statistic
    tau = 0.0 if np.isnan(tau) else float(tau)
    return abs(tau), ranks.spearman_from_pseudo(u, v)


def select_structure(data, bandwidth: Bandwidth | None = None, measure: str = "spearman",
                     prune_alpha: float | None = None, prune_replicates: int = 1000,
                     seed=0, ties: str = "lower-rank"):
    """Select a regular vine and fit it.

    Returns ``(vine, fitted, trace)``. With ``prune_alpha`` set, a selected
    edge whose conditional-independence p-value exceeds it is treated as the
    independence copula and propagates its inputs unchanged.
    """
    from .inference import independence_test

    if measure not in MEASURES:
        raise InvalidInputError(f"measure must be one of {MEASURES}")
    if ties not in TIE_RULES:
        raise InvalidInputError(f"ties must be one of {TIE_RULES}")
    bandwidth = bandwidth or Bandwidth()
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] < 2:
        raise InvalidInputError("data must be an (n, d) matrix with d >= 2")
    n, d = data.shape
    _check_n(n)
    for k in range(d):
        if np.ptp(data[:, k]) == 0:
            raise InvalidInputError(f"column {k + 1} is constant")
    h = bandwidth.resolve(n)
    store = _ground_store(data)
    raw, estimates = {}, {}
    trace = SelectionTrace()
    levels = []
    previous = d
    for level in range(1, d):
        cands = possible_pairs(previous, level)
        scored = []
        for e in cands:
            pairs = edge_pairs(store, e, h)
            w, rho = _weight(pairs.u, pairs.v, measure)
            scored.append(CandidateEdge(e, w, rho))
        n_nodes = d if level == 1 else len(previous)
        graph = [(c.edge.parents[0], c.edge.parents[1], c.weight) for c in scored]
        tie_keys = [c.edge.sort_key() for c in scored]
        chosen = max_spanning_tree(n_nodes, graph, tie_keys)
        tree = []
        for k in chosen:
            scored[k].chosen = True
            e = scored[k].edge
            pairs = edge_pairs(store, e, h)
            independent = False
            if prune_alpha is not None:
                res = independence_test(pairs, replicates=prune_replicates, seed=seed)
                independent = res.p_value > prune_alpha
                if independent:
                    trace.pruned.append(e.label)
            estimates[e.key] = make_estimate(e, pairs, independent)
            if level < d - 1:
                propagate(store, raw, e, pairs, independent=independent, ties=ties)
            tree.append(e)
        trace.levels.append(scored)
        levels.append([e.key for e in tree])
        previous = sorted(tree, key=lambda e: e.sort_key())
    vine = RegularVine.from_labels(d, levels)
    fitted = FittedEmpiricalVine(vine, n, bandwidth, h, estimates, raw, ties)
    return vine, fitted, trace
