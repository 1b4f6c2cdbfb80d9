"""End-to-end chain generation: build the weighted abstraction, optimise
a covering path over it, concretise the path, and escalate through chain
repair, vertex-splitting refinement, and property-set partitioning when
concretisation fails (cheapest remedy first).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import sat
from .bmc import Pin, PathCheck, Unrolling, check_path
from .model import (BOOL, BinOp, Const, Expr, Model, Not, Property, SPACE_NEXT,
                    SPACE_STATE, SPACE_INPUT, SortError, TestChain,
                    check_spaces, conj, disj, eval_expr, sort_of, step)
from .optimizer import (AtspSizeError, instance_from_closure, solve_atsp,
                        tour_to_vertex_path)
from .reachgraph import (PROP, ClosedGraph, ReachGraph, WeightCache,
                         build_reach_graph, exists_covering_path, expand_path,
                         get_covering_path, transitive_closure)
from . import oracle as oracle_mod

MINIMAL = "minimal-certified"
MINIMISED = "minimised"
MULTI = "multi-chain"
FAILED = "failed"


class TimeoutAbort(Exception):
    pass


@dataclass
class EngineConfig:
    k_max: int = 50
    atsp: str = "auto"                 # exact | heuristic | auto
    exact_limit: int = 16
    allow_partition: bool = True
    seed: int = 0
    exhaust_k: bool = False            # resolve every pair up to k_max
    strengthen_invariant: bool = False
    refine_weight_mode: str = "requery"  # or "copy" (take the skipping edge's weight)
    max_splits: int = 64
    max_rounds: int = 200
    sigma_retries: int = 3
    conflict_budget: Optional[int] = None
    deadline: Optional[float] = None
    solver_factory: Optional[Callable] = None


@dataclass
class Stats:
    k_reached: int = 0
    solver_calls: int = 0
    repair_increments: int = 0
    refinement_splits: int = 0
    partitions: int = 0
    wall_time_s: float = 0.0
    backend: str = ""
    abstract_path: Optional[list[str]] = None
    abstract_weights: Optional[list[int]] = None
    initial_abstract_path: Optional[list[str]] = None
    initial_abstract_weights: Optional[list[int]] = None
    first_failed_path: Optional[list[str]] = None
    first_failed_weights: Optional[list[int]] = None
    path_vertex_distinct: bool = False


@dataclass
class ChainResult:
    chains: list[TestChain]
    status: str
    reason: str = ""
    stats: Stats = field(default_factory=Stats)
    graph: Optional[ReachGraph] = None

    @property
    def total_length(self) -> int:
        return sum(c.length for c in self.chains)


def validate_inputs(model: Model, props, init_expr: Expr, final_expr: Expr) -> None:
    state_only = frozenset({SPACE_STATE})
    for e, what in ((init_expr, "the start-state set"), (final_expr, "the final-state set")):
        if sort_of(e) != BOOL:
            raise SortError(f"{what} must be boolean")
        check_spaces(e, state_only, what)
    for p in props:
        if sort_of(p.assumption) != BOOL or sort_of(p.assertion) != BOOL:
            raise SortError(f"property '{p.name}' needs boolean assume/assert")
        check_spaces(p.assumption, frozenset({SPACE_STATE, SPACE_INPUT}),
                     f"assumption of '{p.name}'")
        check_spaces(p.assertion, frozenset({SPACE_STATE, SPACE_INPUT, SPACE_NEXT}),
                     f"assertion of '{p.name}'")


def state_equality_expr(model: Model, state) -> Expr:
    parts = [BinOp("==", model.state_ref(n), Const(state[n], model.state_domain(n)))
             for n, _ in model.state_vars]
    return conj(*parts)


def strengthened_invariant(model: Model, limit: int = 4096) -> Expr:
    """Declared invariant conjoined with the exact reachable-state set,
    computed by explicit exploration (small models only)."""
    if model.state_space_size() > limit:
        return model.state_invariant
    reach = oracle_mod.reachable_states(model)
    return conj(model.state_invariant,
                disj(*(state_equality_expr(model, s) for s in reach)))


def _check_deadline(cfg: EngineConfig) -> None:
    if cfg.deadline is not None and time.monotonic() > cfg.deadline:
        raise TimeoutAbort("generation deadline exceeded")


# ---------------------------------------------------------------------------
# Repair
# ---------------------------------------------------------------------------

@dataclass
class RepairOutcome:
    success: bool
    increments: int = 0
    triple: Optional[tuple[Optional[int], int, int]] = None  # (pred, mid, succ)


def _repair(unr: Unrolling, model: Model, g: ReachGraph, vs: list[int],
            ws: list[int], lo: int, hi: int, cfg: EngineConfig,
            stats: Stats) -> RepairOutcome:
    """Stretch the failed subpath edge by edge, anchored at the concrete
    trigger state each successful check arrives at; on a dead end, retry
    the previous edge with a different witness before giving up."""

    def edge_check(j: int, sigma, w: int) -> Optional[dict]:
        src_v = g.vertices[vs[j]]
        dst_v = g.vertices[vs[j + 1]]
        phi = src_v.phi
        if sigma is not None:
            phi = conj(state_equality_expr(model, sigma), phi)
        chk = check_path(unr, [Pin(phi, src_v.psi), dst_v.pin()], [w],
                         shrink_core=False)
        if not chk.feasible:
            return None
        return chk.trace[w]

    sigma: Optional[dict] = None
    sigma_of: dict[int, Optional[dict]] = {}
    seen: dict[int, list[dict]] = {}
    retries: dict[int, int] = {}
    base = {j: ws[j] for j in range(lo, hi)}
    increments = 0
    j = lo
    while j < hi:
        _check_deadline(cfg)
        w = ws[j]
        tau = None
        while w <= cfg.k_max:
            tau = edge_check(j, sigma, w)
            if tau is not None:
                break
            w += 1
        if tau is not None:
            increments += w - ws[j]
            ws[j] = w
            key = (vs[j], vs[j + 1])
            if g.weights.get(key, -1) < w:
                g.weights[key] = w
            sigma_of[j] = sigma
            seen[j] = [tau]
            sigma = tau
            j += 1
            continue
        # dead end: ask the previous edge for a different arrival state
        if j > lo and retries.get(j, 0) < cfg.sigma_retries:
            retries[j] = retries.get(j, 0) + 1
            ws[j] = base[j]
            prev = j - 1
            tau2 = _alt_witness(unr, model, g, vs, ws, prev, sigma_of[prev],
                                seen[prev])
            if tau2 is not None:
                seen[prev].append(tau2)
                sigma = tau2
                continue
        pred = vs[j - 1] if j > 0 else None
        stats.repair_increments += increments
        return RepairOutcome(False, increments, (pred, vs[j], vs[j + 1]))
    stats.repair_increments += increments
    return RepairOutcome(True, increments)


def _alt_witness(unr: Unrolling, model: Model, g: ReachGraph, vs: list[int],
                 ws: list[int], j: int, sigma, blocked: list[dict]) -> Optional[dict]:
    """Re-solve edge j at its current weight, excluding arrival states
    already tried."""
    src_v = g.vertices[vs[j]]
    dst_v = g.vertices[vs[j + 1]]
    phi = src_v.phi
    if sigma is not None:
        phi = conj(state_equality_expr(model, sigma), phi)
    block = conj(*(Not(state_equality_expr(model, b)) for b in blocked))
    chk = check_path(unr, [Pin(phi, src_v.psi), Pin(conj(dst_v.phi, block), dst_v.psi)],
                     [ws[j]], shrink_core=False)
    if not chk.feasible:
        return None
    return chk.trace[ws[j]]


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------

def refine(g: ReachGraph, pred: int, mid: int, succ: int,
           mode: str = "requery") -> int:
    """Split `mid` so the in-from-pred / out-to-succ pairing that failed
    concretisation is ruled out: the clone takes the incoming edge from
    pred and every outgoing edge except the one to succ; the original
    keeps everything else.  Returns the clone's vertex id."""
    clone = g.add_clone(mid)
    w_in = g.weights.get((pred, mid))
    if mode == "copy":
        w_in = g.weights.get((pred, succ), w_in)
    if w_in is not None:
        g.weights[(pred, clone.idx)] = w_in
    g.weights.pop((pred, mid), None)
    for (a, b), w in list(g.weights.items()):
        if a == mid and b != succ and b != clone.idx:
            g.weights[(clone.idx, b)] = w
    return clone.idx


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------

def partition_vertex_sets(vertices: list[int],
                          conflicts: list[tuple[int, int]]) -> list[set[int]]:
    """Split the vertex set so no class contains a conflicting pair:
    build candidate classes with allowed/forbidden bookkeeping, take a
    minimal cover of the conflicted vertices, attach the untouched rest
    to the largest class."""
    if not conflicts:
        return [set(vertices)]
    q = set(vertices)
    classes: list[tuple[set[int], set[int]]] = []
    for (vi, vj) in conflicts:
        q.discard(vi)
        q.discard(vj)
        if not classes:
            classes = [({vi}, {vj}), ({vj}, {vi})]
            continue
        kept: list[tuple[set[int], set[int]]] = []
        added: list[tuple[set[int], set[int]]] = []
        for (pp, pm) in classes:
            if vi in pp and vj in pp:
                # the conflict landed inside this class: split it both ways
                # rather than discarding it wholesale
                added.append((pp - {vj}, pm | {vj}))
                added.append((pp - {vi}, pm | {vi}))
                continue
            if vi in pm and vj not in pm and vj not in pp:
                pp.add(vj)
            elif vi not in pm and vj not in pm and vj in pp:
                pm.add(vi)
            elif vj in pm and vi not in pm and vi not in pp:
                pp.add(vi)
            elif vj not in pm and vi not in pm and vi in pp:
                pm.add(vj)
            elif vi not in pp | pm and vj not in pp | pm:
                added.append((pp | {vi}, pm | {vj}))
                pp, pm = pp | {vj}, pm | {vi}
            kept.append((pp, pm))
        classes = []
        seen_cls: set[tuple[frozenset, frozenset]] = set()
        for (pp, pm) in kept + added:
            key = (frozenset(pp), frozenset(pm))
            if key not in seen_cls:
                seen_cls.add(key)
                classes.append((pp, pm))
    conflicted = sorted({v for pair in conflicts for v in pair})
    pools = [pp for (pp, _) in classes]
    if not pools or not _covers(pools, conflicted):
        pools += [{v} for v in conflicted]  # singletons always satisfy the rules
    chosen = _min_cover(conflicted, pools)
    chosen.sort(key=lambda s: (-len(s), sorted(s)))
    out: list[set[int]] = []
    for s in chosen:
        if s not in out:
            out.append(set(s))
    out[0] |= q  # leftovers join the largest class
    return out


def _covers(pools: list[set[int]], target: list[int]) -> bool:
    u: set[int] = set()
    for p in pools:
        u |= p
    return set(target) <= u


def _min_cover(target: list[int], pools: list[set[int]]) -> list[set[int]]:
    """Minimal set cover: exact branch-and-bound for small families,
    greedy beyond."""
    target_set = set(target)
    if len(pools) <= 20:
        best: list[list[set[int]]] = [[]]
        found: list[Optional[list[set[int]]]] = [None]

        def bnb(uncovered: set[int], chosen: list[set[int]]):
            if found[0] is not None and len(chosen) >= len(found[0]):
                return
            if not uncovered:
                found[0] = list(chosen)
                return
            v = min(uncovered)
            for p in pools:
                if v in p:
                    bnb(uncovered - p, chosen + [p])

        bnb(target_set, [])
        if found[0] is not None:
            return found[0]
    chosen = []
    uncovered = set(target_set)
    while uncovered:
        p = max(pools, key=lambda s: (len(s & uncovered), -len(s)))
        if not p & uncovered:
            break
        chosen.append(p)
        uncovered -= p
    return chosen


# ---------------------------------------------------------------------------
# The generation pipeline
# ---------------------------------------------------------------------------

def generate_chain(model: Model, props, init_expr: Expr, final_expr: Expr,
                   cfg: Optional[EngineConfig] = None) -> ChainResult:
    """Compute a covering test chain (or several when the properties do
    not admit a single one and partitioning is enabled)."""
    cfg = cfg or EngineConfig()
    t0 = time.perf_counter()
    stats = Stats()
    validate_inputs(model, props, init_expr, final_expr)
    invariant = model.state_invariant
    if cfg.strengthen_invariant:
        invariant = strengthened_invariant(model)
    if cfg.solver_factory is not None:
        solver = cfg.solver_factory()
    else:
        solver = sat.make_solver(deadline=cfg.deadline,
                                 conflict_budget=cfg.conflict_budget)
    unr = Unrolling(model, solver, invariant)
    cache = WeightCache()
    try:
        result = _generate(unr, model, list(props), init_expr, final_expr, cfg,
                           cache, stats, depth=len(props) + 1)
    except sat.SolverLimit as ex:
        raise TimeoutAbort(str(ex)) from ex
    finally:
        stats.solver_calls = unr.stats_solver_calls
        stats.wall_time_s = time.perf_counter() - t0
    result.stats = stats
    return result


def _generate(unr: Unrolling, model: Model, props: list[Property],
              init_expr: Expr, final_expr: Expr, cfg: EngineConfig,
              cache: WeightCache, stats: Stats, depth: int) -> ChainResult:
    out = build_reach_graph(unr, props, init_expr, final_expr, cfg.k_max,
                            exhaust=cfg.exhaust_k, cache=cache)
    stats.k_reached = max(stats.k_reached, out.graph.k_stop)
    if out.status == "bound-exceeded":
        # some pairs may simply be unreachable; a partition can still work
        res = _try_partition(unr, model, props, init_expr, final_expr, cfg,
                             cache, stats, depth, out.graph)
        if res.chains:
            return res
        detail = f" ({res.reason})" if res.reason and "single chain" not in res.reason else ""
        return ChainResult([], FAILED,
                           f"no chain found for given bound {cfg.k_max}{detail}",
                           graph=res.graph or out.graph)
    if out.status == "no-single-chain":
        return _try_partition(unr, model, props, init_expr, final_expr, cfg,
                              cache, stats, depth, out.graph)
    def rebuild_complete() -> ReachGraph:
        # refinement needs the full pairwise picture, not just the edges
        # found before the first covering path appeared
        full = build_reach_graph(unr, props, init_expr, final_expr, cfg.k_max,
                                 exhaust=True, cache=cache)
        stats.k_reached = max(stats.k_reached, full.graph.k_stop)
        return full.graph

    single = _single_chain(unr, model, props, out.graph, cfg, stats,
                           rebuild=None if cfg.exhaust_k else rebuild_complete)
    if isinstance(single, ChainResult):
        return single
    # single-chain attempts exhausted; fall back to partitioning
    return _try_partition(unr, model, props, init_expr, final_expr, cfg,
                          cache, stats, depth, out.graph)


def _try_partition(unr: Unrolling, model: Model, props: list[Property],
                   init_expr: Expr, final_expr: Expr, cfg: EngineConfig,
                   cache: WeightCache, stats: Stats, depth: int,
                   g: ReachGraph) -> ChainResult:
    if not cfg.allow_partition or depth <= 0 or len(props) <= 1:
        return ChainResult([], FAILED, "no single chain covers the property set",
                           graph=g)
    # the partition needs the complete pairwise picture up to the bound
    full = build_reach_graph(unr, props, init_expr, final_expr, cfg.k_max,
                             exhaust=True, cache=cache)
    g = full.graph
    closed = transitive_closure(g)
    I, F = g.init_idx, g.final_idx
    prop_idxs = [v.idx for v in g.vertices if v.kind == PROP]
    for v in prop_idxs:
        if not closed.has(I, v):
            return ChainResult([], FAILED,
                               f"'{g.vertices[v].name}' is unreachable from the "
                               f"start states within the bound", graph=g)
        if not closed.has(v, F):
            return ChainResult([], FAILED,
                               f"the final states are unreachable from "
                               f"'{g.vertices[v].name}' within the bound", graph=g)
    conflicts = [(a, b) for i, a in enumerate(prop_idxs) for b in prop_idxs[i + 1:]
                 if not (closed.has(a, b) or closed.has(b, a))]
    classes = partition_vertex_sets(prop_idxs, conflicts)
    stats.partitions = max(stats.partitions, len(classes))
    if len(classes) <= 1 and conflicts:
        return ChainResult([], FAILED, "partitioning failed to split the conflicts",
                           graph=g)
    chains: list[TestChain] = []
    name_of = {v.idx: v.name for v in g.vertices}
    for cls in classes:
        sub = [p for p in props if p.name in {name_of[i] for i in cls}]
        res = _generate(unr, model, sub, init_expr, final_expr, cfg, cache,
                        stats, depth - 1)
        if not res.chains:
            return ChainResult([], FAILED,
                               f"partition class {sorted(p.name for p in sub)} "
                               f"failed: {res.reason}", graph=g)
        chains.extend(res.chains)
    return ChainResult(chains, MULTI, graph=g)


def _single_chain(unr: Unrolling, model: Model, props: list[Property],
                  g: ReachGraph, cfg: EngineConfig, stats: Stats,
                  rebuild=None):
    """Optimise + concretise + repair/refine loop.  Returns a ChainResult
    on success, or None when no covering path survives refinement."""
    closed = transitive_closure(g)
    path_closure = _optimised_path(closed, g, cfg, stats, collapse_to=None)
    if path_closure is None:
        return None
    vs, ws = expand_path(closed, path_closure)
    if stats.initial_abstract_path is None:
        stats.initial_abstract_path = [g.vertices[v].name for v in vs]
        stats.initial_abstract_weights = list(ws)
    splits = 0
    for _round in range(cfg.max_rounds):
        _check_deadline(cfg)
        pins = [g.vertices[v].pin() for v in vs]
        chk = check_path(unr, pins, ws)
        if chk.feasible:
            return _finish(unr, model, props, g, vs, ws, chk, cfg, stats)
        if stats.first_failed_path is None:
            stats.first_failed_path = [g.vertices[v].name
                                       for v in vs[chk.failed_lo:chk.failed_hi + 1]]
            stats.first_failed_weights = list(ws[chk.failed_lo:chk.failed_hi])
        rep = _repair(unr, model, g, vs, ws, chk.failed_lo, chk.failed_hi, cfg, stats)
        if rep.success and rep.increments > 0:
            continue
        if rebuild is not None:
            g = rebuild()
            rebuild = None
            closed = transitive_closure(g)
            path_closure = _optimised_path(closed, g, cfg, stats, collapse_to=None)
            if path_closure is None:
                return None
            vs, ws = expand_path(closed, path_closure)
            continue
        triple = rep.triple
        if rep.success and rep.increments == 0:
            # vacuous repair: force refinement on the failed range's middle
            if chk.failed_hi - chk.failed_lo < 2:
                return None
            triple = (vs[chk.failed_lo], vs[chk.failed_lo + 1],
                      vs[chk.failed_lo + 2])
        pred, mid, succ = triple
        if pred is None or g.vertices[mid].kind != PROP:
            return None
        if splits >= cfg.max_splits:
            return None
        refine(g, pred, mid, succ, mode=cfg.refine_weight_mode)
        splits += 1
        stats.refinement_splits += 1
        closed = transitive_closure(g)
        cover = get_covering_path(closed)
        if cover is None:
            return None
        path_closure = _optimised_path(closed, g, cfg, stats, collapse_to=cover)
        if path_closure is None:
            path_closure = cover
        vs, ws = expand_path(closed, path_closure)
    return None


def _optimised_path(closed: ClosedGraph, g: ReachGraph, cfg: EngineConfig,
                    stats: Stats, collapse_to: Optional[list[int]]):
    """Shortest covering path on the closure via the circuit solver; when
    a covering path is supplied (refined graphs), collapse each group to
    the member that path uses first."""
    if collapse_to is None:
        if not exists_covering_path(g):
            return None
        keep = None
        lossy = False
    else:
        keep = sorted(set(collapse_to))
        lossy = len(keep) < g.n
    inst = instance_from_closure(closed, keep=keep, lossy=lossy)
    try:
        tour, backend = solve_atsp(inst, backend=cfg.atsp, seed=cfg.seed,
                                   exact_limit=cfg.exact_limit)
    except AtspSizeError:
        tour, backend = None, "exact"
    stats.backend = backend
    if tour is None:
        if collapse_to is not None:
            return collapse_to
        cover = get_covering_path(closed)
        return cover
    return tour_to_vertex_path(inst, tour)


def _finish(unr: Unrolling, model: Model, props, g: ReachGraph, vs, ws,
            chk: PathCheck, cfg: EngineConfig, stats: Stats) -> ChainResult:
    trace, inputs = chk.trace, chk.inputs
    # ground-truth the decoded run and recover cover positions from it
    replayed = [dict(trace[0])]
    for iv in inputs:
        replayed.append(step(model, replayed[-1], iv))
    if replayed != [dict(s) for s in trace]:
        raise RuntimeError("decoded trace does not replay; encoder and "
                           "interpreter disagree")
    covers: dict[str, int] = {}
    for k in range(len(inputs)):
        for p in props:
            if p.name in covers:
                continue
            if eval_expr(p.assumption, trace[k], inputs[k]) and \
                    eval_expr(p.assertion, trace[k], inputs[k], trace[k + 1]):
                covers[p.name] = k
    missing = [p.name for p in props if p.name not in covers]
    if missing:
        raise RuntimeError(f"concretised chain does not cover {missing}")
    chain = TestChain(tuple(inputs), tuple(trace), covers)
    stats.abstract_path = [g.vertices[v].name for v in vs]
    stats.abstract_weights = list(ws)
    stats.path_vertex_distinct = len(set(vs)) == len(vs)
    certified = (stats.backend == "exact"
                 and stats.repair_increments == 0
                 and stats.refinement_splits == 0
                 and stats.path_vertex_distinct
                 and _singleton_triggers(model, props))
    return ChainResult([chain], MINIMAL if certified else MINIMISED, graph=g)


def _singleton_triggers(model: Model, props, limit: int = 1 << 14) -> bool:
    """Explicit check of the minimality certificate's precondition: every
    trigger's state projection is a single state (under the invariant)."""
    if model.state_space_size() * max(model.input_space_size(), 1) > limit:
        return False
    legal = model.legal_inputs()
    names = [n for n, _ in model.state_vars]
    for p in props:
        trig = set()
        for s in model.all_states():
            if not eval_expr(model.state_invariant, s):
                continue
            if any(eval_expr(p.assumption, s, iv) for iv in legal):
                trig.add(tuple(s[n] for n in names))
                if len(trig) > 1:
                    return False
    return True
