"""The weighted abstraction: a digraph over {start, property triggers,
final} whose edge weights are minimal step counts between trigger sets,
built by querying the unrolled model at increasing depth until a covering
path exists.

Also home to the transitive closure (min-plus, with parent pointers so
closure edges expand back to original edges), the covering-path existence
conditions, and the constructive covering-path finder used after
refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .bmc import Pin, Unrolling, get_kreach_edges
from .model import Expr

INIT = "init"
PROP = "prop"
FINAL = "final"


@dataclass(frozen=True)
class Vertex:
    idx: int
    name: str
    kind: str
    phi: Expr
    psi: Optional[Expr] = None

    def pin(self) -> Pin:
        return Pin(self.phi, self.psi)


@dataclass
class ReachGraph:
    """Weighted digraph over init/property/final vertices.  `groups` maps
    every vertex to its refinement group; vertices start in singleton
    groups and clones produced by refinement join their original's
    group."""
    vertices: list[Vertex]
    weights: dict[tuple[int, int], int] = field(default_factory=dict)
    group_of: dict[int, int] = field(default_factory=dict)
    init_idx: int = 0
    final_idx: int = 0
    k_stop: int = 0

    def __post_init__(self):
        for v in self.vertices:
            self.group_of.setdefault(v.idx, v.idx)

    @property
    def n(self) -> int:
        return len(self.vertices)

    def vertex(self, idx: int) -> Vertex:
        return self.vertices[idx]

    def edges(self) -> list[tuple[int, int, int]]:
        return sorted((a, b, w) for (a, b), w in self.weights.items())

    def group_members(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for idx in sorted(self.group_of):
            out.setdefault(self.group_of[idx], []).append(idx)
        return out

    def property_groups(self) -> list[list[int]]:
        return [m for g, m in sorted(self.group_members().items())
                if self.vertices[m[0]].kind == PROP]

    def add_clone(self, of: int) -> Vertex:
        orig = self.vertices[of]
        copies = sum(1 for v in self.vertices if self.group_of[v.idx] == self.group_of[of])
        clone = Vertex(len(self.vertices), f"{orig.name}#{copies + 1}", PROP,
                       orig.phi, orig.psi)
        self.vertices.append(clone)
        self.group_of[clone.idx] = self.group_of[of]
        return clone

    def named_edges(self) -> list[tuple[str, str, int]]:
        return [(self.vertices[a].name, self.vertices[b].name, w)
                for a, b, w in self.edges()]

    def to_dot(self) -> str:
        lines = ["digraph reachgraph {", "  rankdir=LR;"]
        for v in self.vertices:
            shape = "doublecircle" if v.kind != PROP else "circle"
            lines.append(f'  "{v.name}" [shape={shape}];')
        for a, b, w in self.edges():
            lines.append(f'  "{self.vertices[a].name}" -> "{self.vertices[b].name}"'
                         f' [label="{w}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def make_vertices(props, init_expr: Expr, final_expr: Expr) -> list[Vertex]:
    vs = [Vertex(0, "I", INIT, init_expr)]
    for p in props:
        vs.append(Vertex(len(vs), p.name, PROP, p.assumption, p.assertion))
    vs.append(Vertex(len(vs), "F", FINAL, final_expr))
    return vs


class WeightCache:
    """Shared across partitioned sub-runs so pair weights are only ever
    queried once."""

    def __init__(self):
        self.weight: dict[tuple[str, str], int] = {}
        self.checked_to: dict[tuple[str, str], int] = {}


@dataclass
class BuildOutcome:
    graph: ReachGraph
    status: str  # "path" | "no-single-chain" | "bound-exceeded"


def target_pairs(g: ReachGraph) -> list[tuple[int, int]]:
    """All pairs whose weight the abstraction wants: start->trigger,
    trigger->final, trigger->trigger.  start->final only matters when
    there are no properties at all."""
    props = [v.idx for v in g.vertices if v.kind == PROP]
    if not props:
        return [(g.init_idx, g.final_idx)]
    pairs = [(g.init_idx, p) for p in props]
    pairs += [(p, g.final_idx) for p in props]
    pairs += [(a, b) for a in props for b in props if a != b]
    return pairs


def build_reach_graph(unr: Unrolling, props, init_expr: Expr, final_expr: Expr,
                      k_max: int, *, exhaust: bool = False,
                      cache: Optional[WeightCache] = None,
                      restrict_names: Optional[set] = None) -> BuildOutcome:
    """Grow the abstraction one depth at a time until a covering path
    exists (or, with exhaust=True, until every pair is resolved), giving
    each pair the minimal depth at which it is witnessed."""
    vertices = make_vertices(props, init_expr, final_expr)
    g = ReachGraph(vertices, final_idx=len(vertices) - 1)
    cache = cache if cache is not None else WeightCache()
    remaining = set(target_pairs(g))
    k = 0
    while True:
        done = not remaining
        if not exhaust and exists_covering_path(g):
            g.k_stop = max(k - 1, 0)
            return BuildOutcome(g, "path")
        if done:
            g.k_stop = max(k - 1, 0)
            if exists_covering_path(g):
                return BuildOutcome(g, "path")
            return BuildOutcome(g, "no-single-chain")
        if k > k_max:
            g.k_stop = k_max
            if exhaust and exists_covering_path(g):
                return BuildOutcome(g, "path")
            return BuildOutcome(g, "bound-exceeded")
        query: dict[tuple[int, int], tuple[Pin, Pin]] = {}
        for (a, b) in sorted(remaining):
            va, vb = g.vertices[a], g.vertices[b]
            key = (va.name, vb.name)
            if key in cache.weight:
                if cache.weight[key] == k:
                    g.weights[(a, b)] = k
                    remaining.discard((a, b))
                continue
            if cache.checked_to.get(key, -1) >= k:
                continue
            if k == 0 and va.kind == PROP and vb.kind == FINAL:
                # covering consumes one transition; a final edge is never 0
                cache.checked_to[key] = 0
                continue
            query[(a, b)] = (va.pin(), vb.pin())
        if query:
            found = get_kreach_edges(unr, query, k)
            for (a, b) in query:
                key = (g.vertices[a].name, g.vertices[b].name)
                if (a, b) in found:
                    cache.weight[key] = k
                    g.weights[(a, b)] = k
                    remaining.discard((a, b))
                else:
                    cache.checked_to[key] = k
        k += 1


# ---------------------------------------------------------------------------
# Covering-path existence and construction
# ---------------------------------------------------------------------------

def _reach_matrix(g: ReachGraph) -> list[list[bool]]:
    n = g.n
    r = [[False] * n for _ in range(n)]
    for i in range(n):
        r[i][i] = True
    for (a, b) in g.weights:
        r[a][b] = True
    for m in range(n):
        rm = r[m]
        for i in range(n):
            if r[i][m]:
                ri = r[i]
                for j in range(n):
                    if rm[j]:
                        ri[j] = True
    return r


def exists_covering_path(g: ReachGraph) -> bool:
    """Existence conditions on the transitive closure: every group has a
    viable member (reachable from start, reaching final), and every pair
    of groups has viable members ordered one way or the other."""
    r = _reach_matrix(g)
    I, F = g.init_idx, g.final_idx
    if not r[I][F]:
        return False
    viable = [r[I][v] and r[v][F] for v in range(g.n)]
    groups = g.property_groups()
    chosen = []
    for members in groups:
        vs = [v for v in members if viable[v]]
        if not vs:
            return False
        chosen.append(vs)
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            if not any(r[a][b] or r[b][a] for a in chosen[i] for b in chosen[j]):
                return False
    return True


@dataclass
class ClosedGraph:
    """Min-plus transitive closure with parent pointers for expansion."""
    base: ReachGraph
    dist: dict[tuple[int, int], int]
    via: dict[tuple[int, int], Optional[int]]

    def has(self, a: int, b: int) -> bool:
        return (a, b) in self.dist

    def expand_edge(self, a: int, b: int) -> list[tuple[int, int, int]]:
        """Original-edge decomposition of a closure edge, as
        (src, dst, weight) triples."""
        if a == b:
            return []
        m = self.via.get((a, b))
        if m is None:
            return [(a, b, self.dist[(a, b)])]
        return self.expand_edge(a, m) + self.expand_edge(m, b)


def transitive_closure(g: ReachGraph) -> ClosedGraph:
    n = g.n
    dist: dict[tuple[int, int], int] = {(i, i): 0 for i in range(n)}
    via: dict[tuple[int, int], Optional[int]] = {}
    for (a, b), w in g.weights.items():
        if dist.get((a, b), math.inf) > w:
            dist[(a, b)] = w
            via[(a, b)] = None
    for m in range(n):
        for i in range(n):
            dim = dist.get((i, m))
            if dim is None or i == m:
                continue
            for j in range(n):
                if j == m:
                    continue
                dmj = dist.get((m, j))
                if dmj is None:
                    continue
                if dist.get((i, j), math.inf) > dim + dmj:
                    dist[(i, j)] = dim + dmj
                    via[(i, j)] = m
    return ClosedGraph(g, dist, via)


def get_covering_path(closed: ClosedGraph) -> Optional[list[int]]:
    """Constructive covering path on the closure from the existence
    conditions' proof: keep a path from the start vertex, insert each
    group's chosen member after the latest path vertex that reaches it
    (checking the onward link), and append the final vertex.  Visits one
    member per refinement group; returns None exactly when stuck."""
    g = closed.base
    I, F = g.init_idx, g.final_idx
    viable = [closed.has(I, v) and closed.has(v, F) for v in range(g.n)]
    path = [I]
    for members in g.property_groups():
        placed = False
        for v in sorted(members):
            if not viable[v]:
                continue
            for pos in range(len(path) - 1, -1, -1):
                u = path[pos]
                nxt = path[pos + 1] if pos + 1 < len(path) else None
                if closed.has(u, v) and (nxt is None or closed.has(v, nxt)):
                    path.insert(pos + 1, v)
                    placed = True
                    break
            if placed:
                break
        if not placed:
            return None
    if not closed.has(path[-1], F):
        return None
    path.append(F)
    return path


def path_weights(closed: ClosedGraph, path: list[int]) -> Optional[list[int]]:
    ws = []
    for a, b in zip(path, path[1:]):
        if not closed.has(a, b):
            return None
        ws.append(closed.dist[(a, b)])
    return ws


def expand_path(closed: ClosedGraph, path: list[int]) -> tuple[list[int], list[int]]:
    """Expand a closure-level path to original edges, inserting the
    intermediate vertices the closure routed through."""
    vs = [path[0]]
    ws: list[int] = []
    for a, b in zip(path, path[1:]):
        for (x, y, w) in closed.expand_edge(a, b):
            vs.append(y)
            ws.append(w)
    return vs, ws
