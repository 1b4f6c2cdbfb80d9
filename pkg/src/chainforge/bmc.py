"""Bounded-model-checking queries over the unrolled transition relation.

One `Unrolling` owns one solver instance and grows monotonically: raising
the horizon only appends clauses, so all queries (single-pair
reachability, batched k-reach edge enumeration, full path concretisation)
share learned state.  Query-specific constraints are attached through
fresh guard literals passed as assumptions, and retired afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from . import sat
from .encode import Gates, alloc_var, assert_assignment, decode_var, encode_expr
from .model import Expr, Model, SPACE_NEXT, SPACE_STATE, SPACE_INPUT, TRUE, refs_of


class BmcError(Exception):
    pass


@dataclass(frozen=True)
class Pin:
    """What a path vertex asserts at its offset: the trigger phi over
    (state, input), and for property vertices the assertion psi over
    (state, input, next state)."""
    phi: Expr
    psi: Optional[Expr] = None


@dataclass
class PathCheck:
    feasible: bool
    inputs: Optional[list[dict]] = None
    trace: Optional[list[dict]] = None
    failed_lo: int = -1
    failed_hi: int = -1


class Unrolling:
    """Transition relation unrolled step by step, with the input
    assumption and the state invariant asserted at every frame."""

    def __init__(self, model: Model, solver=None, invariant: Optional[Expr] = None):
        self.model = model
        self.solver = solver if solver is not None else sat.Solver()
        self.gates = Gates(self.solver)
        self.invariant = invariant if invariant is not None else model.state_invariant
        self.state_frames: list[dict] = []
        self.input_frames: list[dict] = []
        self._expr_cache: dict = {}
        self._keep: list = []
        self.stats_solver_calls = 0
        self._add_frame()

    # -- frames ---------------------------------------------------------------

    @property
    def horizon(self) -> int:
        return len(self.state_frames) - 1

    def _add_frame(self) -> None:
        k = len(self.state_frames)
        self.state_frames.append(
            {n: alloc_var(self.gates, d) for n, d in self.model.state_vars})
        self.input_frames.append(
            {n: alloc_var(self.gates, d) for n, d in self.model.inputs})
        if k > 0:
            self._assert_transition(k)
        if self.invariant is not TRUE:
            self.solver.add_clause([self.pred_lit(self.invariant, k, grow=False)])
        if self.model.input_assumption is not TRUE:
            self.solver.add_clause(
                [self.pred_lit(self.model.input_assumption, k, grow=False)])

    def _assert_transition(self, k: int) -> None:
        m = self.model
        look = self._lookup(k - 1)
        updated = {n for n, _ in m.transition}
        for name, dom in m.state_vars:
            target = self.state_frames[k][name]
            expr = m.transition_expr(name)
            if expr is None:
                assert_assignment(self.gates, target, self.state_frames[k - 1][name], dom)
            else:
                assert_assignment(self.gates, target, encode_expr(expr, self.gates, look), dom)

    def ensure(self, k: int) -> None:
        while self.horizon < k:
            self._add_frame()

    def _lookup(self, k: int):
        def look(space: str, name: str):
            if space == SPACE_STATE:
                return self.state_frames[k][name]
            if space == SPACE_INPUT:
                return self.input_frames[k][name]
            return self.state_frames[k + 1][name]
        return look

    def pred_lit(self, expr: Expr, k: int, grow: bool = True) -> int:
        """Literal equivalent to `expr` evaluated at step k (next-state
        references resolve to step k+1)."""
        if grow:
            need = k + 1 if self._has_next(expr) else k
            self.ensure(need)
        key = (id(expr), k)
        lit = self._expr_cache.get(key)
        if lit is None:
            lit = encode_expr(expr, self.gates, self._lookup(k))
            self._expr_cache[key] = lit
            self._keep.append(expr)
        return lit

    def _has_next(self, expr: Expr) -> bool:
        key = ("next", id(expr))
        v = self._expr_cache.get(key)
        if v is None:
            v = any(r.space == SPACE_NEXT for r in refs_of(expr))
            self._expr_cache[key] = v
            self._keep.append(expr)
        return v

    # -- solving --------------------------------------------------------------

    def guard(self) -> int:
        return self.solver.new_var()

    def pin(self, g: int, lit: int) -> None:
        self.solver.add_clause([-g, lit])

    def retire(self, g: int) -> None:
        self.solver.add_clause([-g])

    def solve(self, assumptions: Sequence[int], shrink_core: bool = False) -> sat.SolveResult:
        self.stats_solver_calls += 1
        if shrink_core:
            return self.solver.solve_with_core_shrink(list(assumptions))
        return self.solver.solve(list(assumptions))

    def decode_state(self, model_bits, k: int) -> dict:
        return {n: decode_var(self.state_frames[k][n], model_bits, d)
                for n, d in self.model.state_vars}

    def decode_input(self, model_bits, k: int) -> dict:
        return {n: decode_var(self.input_frames[k][n], model_bits, d)
                for n, d in self.model.inputs}

    def decode_run(self, model_bits, n_steps: int) -> tuple[list[dict], list[dict]]:
        trace = [self.decode_state(model_bits, k) for k in range(n_steps + 1)]
        inputs = [self.decode_input(model_bits, k) for k in range(n_steps)]
        return trace, inputs


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

def reach_check(unr: Unrolling, src: Expr, dst: Expr, k: int):
    """Is some dst-state reachable from some src-state in exactly k steps?
    Returns (sat, trace, inputs); triggers may constrain the input at
    their own step."""
    if k < 0:
        raise ValueError("step count must be >= 0")
    unr.ensure(k)
    g = unr.guard()
    unr.pin(g, unr.pred_lit(src, 0))
    unr.pin(g, unr.pred_lit(dst, k))
    res = unr.solve([g])
    unr.retire(g)
    if res.status == sat.UNKNOWN:
        raise sat.SolverLimit("reachability query aborted")
    if res.status == sat.UNSAT:
        return False, None, None
    trace, inputs = unr.decode_run(res.model, k)
    return True, trace, inputs


def _pin_lits(unr: Unrolling, pin: Pin, k: int, with_psi: bool) -> list[int]:
    lits = [unr.pred_lit(pin.phi, k)]
    if with_psi and pin.psi is not None:
        lits.append(unr.pred_lit(pin.psi, k))
    return lits


def _witnesses_pair(unr: Unrolling, src: Pin, dst: Pin, k: int,
                    trace, inputs_ext) -> bool:
    """Concrete check mirroring the k-reach query for one pair."""
    from .model import eval_expr
    s0, i0 = trace[0], inputs_ext[0]
    if not eval_expr(src.phi, s0, i0):
        return False
    if src.psi is not None and not eval_expr(src.psi, s0, i0, trace[1]):
        return False
    sk, ik = trace[k], inputs_ext[k]
    if not eval_expr(dst.phi, sk, ik):
        return False
    if k == 0 and dst.psi is not None and not eval_expr(dst.psi, sk, ik, trace[1]):
        return False
    return True


def get_kreach_edges(unr: Unrolling, pairs: dict, k: int) -> dict:
    """Which of `pairs` (key -> (src Pin, dst Pin)) are witnessed by some
    exactly-k-step run?  Solved as one disjunctive query, iteratively
    removing witnessed pairs from the disjunction until it is
    unsatisfiable.  Returns key -> (trace, inputs)."""
    if not pairs:
        return {}
    depth = max(k, 1)
    unr.ensure(depth)
    gates = unr.gates
    found: dict = {}
    remaining = dict(pairs)
    while remaining:
        disj = []
        for key, (src, dst) in remaining.items():
            lits = _pin_lits(unr, src, 0, with_psi=True)
            lits += _pin_lits(unr, dst, k, with_psi=(k == 0))
            disj.append(gates.land_many(lits))
        g = unr.guard()
        unr.pin(g, gates.lor_many(disj))
        res = unr.solve([g])
        unr.retire(g)
        if res.status == sat.UNKNOWN:
            raise sat.SolverLimit("k-reach query aborted")
        if res.status == sat.UNSAT:
            break
        trace, _ = unr.decode_run(res.model, depth)
        inputs_ext = [unr.decode_input(res.model, j) for j in range(depth + 1)]
        hits = [key for key, (src, dst) in remaining.items()
                if _witnesses_pair(unr, src, dst, k, trace, inputs_ext)]
        if not hits:
            raise BmcError("k-reach witness matched no pending pair")
        for key in hits:
            found[key] = (trace[:k + 1], inputs_ext[:k + 1])
            del remaining[key]
    return found


def check_path(unr: Unrolling, pins: Sequence[Pin], weights: Sequence[int],
               shrink_core: bool = True) -> PathCheck:
    """Concretise an abstract path: pin each vertex at the cumulative
    offset of the weights before it, connected by the transition relation.

    Feasible: returns the decoded input sequence (length = sum of
    weights) and trace.  Infeasible: returns the smallest contiguous
    vertex range covering the unsat core, widened to at least three
    vertices."""
    if len(pins) != len(weights) + 1:
        raise ValueError("need exactly one weight per consecutive vertex pair")
    offsets = [0]
    for w in weights:
        offsets.append(offsets[-1] + w)
    total = offsets[-1]
    depth = total
    for p, o in zip(pins, offsets):
        if p.psi is not None:
            depth = max(depth, o + 1)
    unr.ensure(depth)
    tags = []
    for p, o in zip(pins, offsets):
        t = unr.guard()
        for lit in _pin_lits(unr, p, o, with_psi=True):
            unr.pin(t, lit)
        tags.append(t)
    res = unr.solve(tags, shrink_core=shrink_core)
    for t in tags:
        unr.retire(t)
    if res.status == sat.UNKNOWN:
        raise sat.SolverLimit("path query aborted")
    if res.status == sat.SAT:
        trace, inputs = unr.decode_run(res.model, total)
        return PathCheck(True, inputs=inputs, trace=trace)
    core = set(res.core or ())
    idxs = [i for i, t in enumerate(tags) if t in core]
    if not idxs:
        raise BmcError("path query unsatisfiable without any pinned vertex; "
                       "the model's invariant or input assumption is inconsistent")
    lo, hi = min(idxs), max(idxs)
    while hi - lo < 2 and (lo > 0 or hi < len(pins) - 1):
        if lo > 0:
            lo -= 1
        elif hi < len(pins) - 1:
            hi += 1
    return PathCheck(False, failed_lo=lo, failed_hi=hi)
