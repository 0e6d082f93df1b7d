"""Regular-vine structures: construction, labelling, validation and JSON I/O.

Variables are 0-based inside the package. Everything a user sees (labels,
JSON, the ``dvine``/``cvine`` helpers) is 1-based.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .exceptions import InvalidInputError, VineParseError, VineStructureError


def _fmt_set(items) -> str:
    return ",".join(str(k + 1) for k in sorted(items))


@dataclass(frozen=True)
class VineEdge:
    """One pair-copula: conditioned pair ``(i, j)`` given ``conditioning``.

    ``parents`` are variable indices at level 1 and indices into the previous
    tree otherwise.
    """

    conditioned: tuple
    conditioning: frozenset
    level: int
    parents: tuple

    @property
    def i(self) -> int:
        return self.conditioned[0]

    @property
    def j(self) -> int:
        return self.conditioned[1]

    @property
    def key(self) -> tuple:
        return (self.conditioned[0], self.conditioned[1], self.conditioning)

    @property
    def complete_union(self) -> frozenset:
        return frozenset(self.conditioned) | self.conditioning

    @property
    def label(self) -> str:
        text = _fmt_set(self.conditioned)
        if self.conditioning:
            text += "|" + _fmt_set(self.conditioning)
        return text

    def sort_key(self):
        return (self.level, min(self.conditioned, default=-1), tuple(self.conditioned),
                tuple(sorted(self.conditioning)))

    def __str__(self):
        return self.label


def parse_label(text: str) -> tuple:
    """Turn a 1-based label such as ``"1,4|2,3"`` (or ``"14|23"``) into an edge key."""
    text = text.strip().replace(" ", "")
    head, _, tail = text.partition("|")

    def numbers(part):
        if not part:
            return []
        if "," in part:
            return [int(p) - 1 for p in part.split(",")]
        return [int(c) - 1 for c in part]

    try:
        pair = numbers(head)
        cond = numbers(tail)
    except ValueError as exc:
        raise InvalidInputError(f"malformed edge label {text!r}") from exc
    if len(pair) != 2 or pair[0] == pair[1] or set(pair) & set(cond):
        raise InvalidInputError(f"malformed edge label {text!r}")
    i, j = sorted(pair)
    return (i, j, frozenset(cond))


def _label_from_unions(a: frozenset, b: frozenset):
    """Conditioned set and conditioning set of the edge joining two unions."""
    return tuple(sorted(a ^ b)), a & b


@dataclass(frozen=True)
class RegularVine:
    """Nested trees T_1..T_{d-1}. Edges inside each tree are kept sorted."""

    d: int
    trees: tuple

    # ------------------------------------------------------------------
    # construction
    @classmethod
    def from_skeleton(cls, d: int, skeleton: Sequence[Sequence[tuple]],
                      check: bool = True) -> "RegularVine":
        """Build a vine from parent pairs.

        ``skeleton[0]`` lists variable pairs of T_1; ``skeleton[l]`` lists pairs
        of indices into ``skeleton[l - 1]``. Labels are derived from the
        complete unions of the parents. With ``check=False`` an invalid
        skeleton is accepted so that :func:`validate` can report on it.
        """
        trees = []
        unions = [frozenset([k]) for k in range(d)]
        remap = {k: k for k in range(d)}
        for level, pairs in enumerate(skeleton, start=1):
            edges = []
            for a, b in pairs:
                a, b = remap.get(int(a), int(a)), remap.get(int(b), int(b))
                a, b = min(a, b), max(a, b)
                if not (0 <= a < len(unions) and 0 <= b < len(unions)):
                    if check:
                        raise VineStructureError(
                            f"T{level}: parent index out of range in ({a}, {b})")
                    conditioned, conditioning = (), frozenset()
                else:
                    conditioned, conditioning = _label_from_unions(unions[a], unions[b])
                edges.append(VineEdge(conditioned, frozenset(conditioning), level,
                                      (a, b)))
            # canonical order; the next level's parent indices follow the sort
            order = sorted(range(len(edges)), key=lambda k: edges[k].sort_key())
            edges = [edges[k] for k in order]
            remap = {old: new for new, old in enumerate(order)}
            trees.append(edges)
            unions = [e.complete_union for e in edges]
        vine = cls(d, tuple(tuple(t) for t in trees))
        if check:
            problems = validate(vine)
            if problems:
                raise VineStructureError("invalid regular vine: " + "; ".join(problems),
                                         problems)
        return vine

    @classmethod
    def from_labels(cls, d: int, levels: Sequence[Iterable[tuple]],
                    check: bool = True) -> "RegularVine":
        """Build a vine from edge keys ``(i, j, conditioning)`` grouped by level.

        Parents are recovered by looking up complete unions in the tree below.
        """
        skeleton = []
        prev = None
        for level, keys in enumerate(levels, start=1):
            keys = [(min(i, j), max(i, j), frozenset(v)) for i, j, v in keys]
            pairs = []
            if level == 1:
                for i, j, v in keys:
                    if v:
                        raise VineStructureError(f"level-1 edge {i + 1},{j + 1} has a "
                                                 "non-empty conditioning set")
                    pairs.append((i, j))
            else:
                lookup = {}
                for idx, key in enumerate(prev):
                    cu = frozenset(key[:2]) | key[2]
                    lookup.setdefault(cu, idx)
                for i, j, v in keys:
                    a = lookup.get(v | {i})
                    b = lookup.get(v | {j})
                    if a is None or b is None:
                        raise VineStructureError(
                            f"edge {_fmt_set((i, j))}|{_fmt_set(v)} has no parent pair "
                            f"in tree {level - 1}")
                    pairs.append((a, b))
            skeleton.append(pairs)
            prev = keys
        vine = cls.from_skeleton(d, skeleton, check=check)
        if check:
            wanted = {k for keys in levels for k in
                      [(min(i, j), max(i, j), frozenset(v)) for i, j, v in keys]}
            got = {e.key for e in vine.edges()}
            if wanted != got:
                raise VineStructureError("labels are inconsistent with their parents")
        return vine

    # ------------------------------------------------------------------
    # access
    def edges(self) -> Iterator[VineEdge]:
        for tree in self.trees:
            yield from tree

    def tree(self, level: int) -> tuple:
        return self.trees[level - 1]

    def edge(self, ref) -> VineEdge:
        """Look up an edge by :class:`VineEdge`, key tuple or 1-based label."""
        if isinstance(ref, VineEdge):
            key = ref.key
        elif isinstance(ref, str):
            key = parse_label(ref)
        else:
            i, j, v = ref
            key = (min(i, j), max(i, j), frozenset(v))
        for e in self.edges():
            if e.key == key:
                return e
        raise KeyError(f"edge {ref} not in vine")

    def skeleton(self) -> list:
        return [[e.parents for e in tree] for tree in self.trees]

    def __len__(self):
        return sum(len(t) for t in self.trees)


# ----------------------------------------------------------------------
# labelling and validation

def derive_labels(vine: RegularVine) -> RegularVine:
    """Recompute all conditioned/conditioning sets from the parent references."""
    return RegularVine.from_skeleton(vine.d, vine.skeleton(), check=False)


def _spanning_tree_problems(n_nodes: int, pairs, where: str) -> list:
    problems = []
    if len(pairs) != n_nodes - 1:
        problems.append(f"{where}: {len(pairs)} edges, a spanning tree on "
                        f"{n_nodes} nodes needs {n_nodes - 1}")
    parent = list(range(n_nodes))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        if not (0 <= a < n_nodes and 0 <= b < n_nodes) or a == b:
            problems.append(f"{where}: invalid node pair ({a}, {b})")
            continue
        ra, rb = find(a), find(b)
        if ra == rb:
            problems.append(f"{where}: edge ({a}, {b}) closes a cycle")
        else:
            parent[ra] = rb
    if not problems and len({find(k) for k in range(n_nodes)}) != 1:
        problems.append(f"{where}: tree is not connected")
    return problems


def validate(vine: RegularVine) -> list:
    """Return a list of human-readable violations; empty means valid."""
    problems = []
    d = vine.d
    if d < 2:
        return ["dimension must be at least 2"]
    if len(vine.trees) != d - 1:
        problems.append(f"expected {d - 1} trees, found {len(vine.trees)}")
    n_nodes = d
    prev = None
    for level, tree in enumerate(vine.trees, start=1):
        where = f"T{level}"
        pairs = [e.parents for e in tree]
        problems += _spanning_tree_problems(n_nodes, pairs, where)
        for e in tree:
            if level > 1 and prev is not None:
                a, b = e.parents
                if 0 <= a < len(prev) and 0 <= b < len(prev):
                    pa, pb = prev[a], prev[b]
                    if not set(pa.parents) & set(pb.parents):
                        problems.append(f"{where}: proximity violation joining "
                                        f"{pa.label} and {pb.label}")
            if len(e.conditioned) != 2:
                problems.append(f"{where}: edge {e.parents} has conditioned set of "
                                f"size {len(e.conditioned)}")
                continue
            if e.i == e.j or set(e.conditioned) & e.conditioning:
                problems.append(f"{where}: edge {e.label} overlaps its conditioning set")
            if len(e.conditioning) != level - 1:
                problems.append(f"{where}: edge {e.label} has {len(e.conditioning)} "
                                f"conditioning variables, expected {level - 1}")
        n_nodes = len(tree)
        prev = tree
    keys = [(tuple(e.conditioned), e.conditioning) for e in vine.edges()]
    if len(set(keys)) != len(keys):
        problems.append("duplicate edge labels")
    if len(keys) != d * (d - 1) // 2:
        problems.append(f"vine has {len(keys)} edges, expected {d * (d - 1) // 2}")
    return problems


# ----------------------------------------------------------------------
# standard classes

def dvine(order: Sequence[int]) -> RegularVine:
    """Drawable vine along a 1-based variable ordering (a path at every level)."""
    order = [int(k) - 1 for k in order]
    d = len(order)
    if sorted(order) != list(range(d)) or d < 2:
        raise InvalidInputError("dvine order must be a permutation of 1..d, d >= 2")
    levels = []
    for lag in range(1, d):
        levels.append([(order[k], order[k + lag], frozenset(order[k + 1:k + lag]))
                       for k in range(d - lag)])
    return RegularVine.from_labels(d, levels)


def cvine(roots: Sequence[int], d: int | None = None) -> RegularVine:
    """Canonical vine with the given 1-based root sequence (a star at every level)."""
    roots = [int(r) - 1 for r in roots]
    d = len(roots) + 1 if d is None else d
    if len(roots) != d - 1 or len(set(roots)) != len(roots) or \
            any(not 0 <= r < d for r in roots):
        raise InvalidInputError("cvine needs d - 1 distinct roots in 1..d")
    levels = []
    for level in range(1, d):
        root = roots[level - 1]
        given = frozenset(roots[:level - 1])
        others = [k for k in range(d) if k not in given and k != root]
        levels.append([(root, k, given) for k in others])
    return RegularVine.from_labels(d, levels)


def rvine_example() -> RegularVine:
    """A five-dimensional regular vine that is neither drawable nor canonical."""
    levels = [
        [(0, 1, ()), (1, 2, ()), (2, 3, ()), (2, 4, ())],
        [(0, 2, (1,)), (1, 3, (2,)), (3, 4, (2,))],
        [(0, 3, (1, 2)), (1, 4, (2, 3))],
        [(0, 4, (1, 2, 3))],
    ]
    return RegularVine.from_labels(
        5, [[(i, j, frozenset(v)) for i, j, v in lv] for lv in levels])


# ----------------------------------------------------------------------
# serialization

def vine_to_dict(vine: RegularVine, extra=None) -> dict:
    trees = []
    for tree in vine.trees:
        rows = []
        for e in tree:
            row = {"i": e.i + 1, "j": e.j + 1,
                   "v": [k + 1 for k in sorted(e.conditioning)]}
            if extra is not None:
                row.update(extra(e))
            rows.append(row)
        trees.append(rows)
    return {"d": vine.d, "trees": trees}


def serialize(vine: RegularVine) -> str:
    """Canonical JSON text; edges sorted by (level, smallest conditioned index)."""
    return json.dumps(vine_to_dict(vine), indent=2) + "\n"


def vine_from_dict(obj) -> RegularVine:
    if not isinstance(obj, dict) or "d" not in obj or "trees" not in obj:
        raise VineParseError("vine JSON needs keys 'd' and 'trees'")
    try:
        d = int(obj["d"])
    except (TypeError, ValueError) as exc:
        raise VineParseError("'d' must be an integer") from exc
    levels = []
    for level, tree in enumerate(obj["trees"], start=1):
        keys = []
        for pos, row in enumerate(tree):
            where = f"tree {level}, edge {pos + 1}"
            try:
                i, j = int(row["i"]) - 1, int(row["j"]) - 1
                v = frozenset(int(k) - 1 for k in row.get("v", []))
            except (KeyError, TypeError, ValueError) as exc:
                raise VineParseError(f"{where}: malformed edge {row!r}") from exc
            if i == j or i in v or j in v:
                raise VineParseError(f"{where}: conditioning set overlaps the "
                                     f"conditioned pair in {row!r}")
            if any(not 0 <= k < d for k in {i, j} | v):
                raise VineParseError(f"{where}: variable index out of range in {row!r}")
            keys.append((i, j, v))
        levels.append(keys)
    try:
        return RegularVine.from_labels(d, levels)
    except VineStructureError as exc:
        raise VineParseError(str(exc)) from exc


def deserialize(text: str) -> RegularVine:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise VineParseError(f"line {exc.lineno}: {exc.msg}") from exc
    return vine_from_dict(obj)


def to_dot(vine: RegularVine, weights=None, names=None) -> str:
    """Graphviz description of the ground tree.

    ``weights`` maps edge keys to Spearman correlations; pen width grows
    with their absolute value.
    """
    names = names or [str(k + 1) for k in range(vine.d)]
    lines = ["graph ground_tree {", "  node [shape=ellipse];"]
    for k, name in enumerate(names):
        lines.append(f'  v{k} [label="{name}"];')
    for e in vine.tree(1):
        attrs = []
        if weights is not None and e.key in weights:
            w = float(weights[e.key])
            attrs.append(f"penwidth={1.0 + 6.0 * abs(w):.3f}")
            attrs.append(f'label="{w:.2f}"')
        attr = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f"  v{e.i} -- v{e.j}{attr};")
    lines.append("}")
    return "\n".join(lines) + "\n"
