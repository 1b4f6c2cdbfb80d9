"""Propositional layer: an embedded CDCL solver with an assumption
interface and assumption-level unsatisfiable cores, plus a DIMACS-file
backend that delegates to an external solver process.

A solver instance is stateful and single-threaded; the clause set may
grow between `solve` calls (incremental use).  Independent instances are
safe to run concurrently.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass
from typing import Optional, Sequence

SAT = "sat"
UNSAT = "unsat"
UNKNOWN = "unknown"


class SolverLimit(Exception):
    """Conflict budget or deadline exhausted; the query result is unknown."""


@dataclass
class SolveResult:
    status: str
    model: Optional[list[bool]] = None      # 1-indexed via model[var]
    core: Optional[list[int]] = None        # subset of the assumption literals

    def value(self, lit: int) -> bool:
        v = self.model[abs(lit)]
        return v if lit > 0 else not v


class Solver:
    """CDCL with two-watched literals, activity-based decisions, phase
    saving, Luby restarts, and minisat-style assumption handling."""

    def __init__(self, conflict_budget: Optional[int] = None,
                 deadline: Optional[float] = None, verify_models: bool = False):
        self.nvars = 0
        self.clauses: list[list[int]] = []
        self.watches: dict[int, list[int]] = {}
        self.assign: list[int] = [0]          # 0 unknown, 1 true, -1 false
        self.level: list[int] = [0]
        self.reason: list[Optional[int]] = [None]
        self.activity: list[float] = [0.0]
        self.phase: list[bool] = [False]
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.ok = True
        self.var_inc = 1.0
        self.conflict_budget = conflict_budget
        self.deadline = deadline
        self.verify_models = verify_models
        self.stats_conflicts = 0
        self.stats_solves = 0

    # -- variables and clauses ----------------------------------------------

    def new_var(self) -> int:
        self.nvars += 1
        v = self.nvars
        self.assign.append(0)
        self.level.append(0)
        self.reason.append(None)
        self.activity.append(0.0)
        self.phase.append(False)
        self.watches[v] = []
        self.watches[-v] = []
        return v

    def _value(self, lit: int) -> int:
        v = self.assign[abs(lit)]
        return v if lit > 0 else -v

    def add_clause(self, lits: Sequence[int]) -> None:
        if not self.ok:
            return
        self._backtrack(0)
        out: list[int] = []
        seen = set()
        for l in lits:
            if l in seen:
                continue
            if -l in seen:
                return  # tautology
            if self._value(l) == 1 and self.level[abs(l)] == 0:
                return  # already satisfied for good
            if self._value(l) == -1 and self.level[abs(l)] == 0:
                continue  # permanently false literal
            seen.add(l)
            out.append(l)
        if not out:
            self.ok = False
            return
        if len(out) == 1:
            if not self._enqueue(out[0], None):
                self.ok = False
            elif self._propagate() is not None:
                self.ok = False
            return
        ci = len(self.clauses)
        self.clauses.append(out)
        self.watches[out[0]].append(ci)
        self.watches[out[1]].append(ci)

    # -- trail ----------------------------------------------------------------

    def _enqueue(self, lit: int, reason: Optional[int]) -> bool:
        val = self._value(lit)
        if val == 1:
            return True
        if val == -1:
            return False
        v = abs(lit)
        self.assign[v] = 1 if lit > 0 else -1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)
        return True

    def _backtrack(self, lvl: int) -> None:
        if len(self.trail_lim) <= lvl:
            return
        bound = self.trail_lim[lvl]
        for lit in reversed(self.trail[bound:]):
            v = abs(lit)
            self.phase[v] = lit > 0
            self.assign[v] = 0
            self.reason[v] = None
        del self.trail[bound:]
        del self.trail_lim[lvl:]
        self.qhead = min(self.qhead, len(self.trail))

    def _propagate(self) -> Optional[int]:
        """Unit propagation; returns a conflicting clause index or None."""
        clauses = self.clauses
        while self.qhead < len(self.trail):
            lit = self.trail[self.qhead]
            self.qhead += 1
            false_lit = -lit
            watch = self.watches[false_lit]
            i = j = 0
            n = len(watch)
            while i < n:
                ci = watch[i]
                i += 1
                c = clauses[ci]
                # make sure c[1] is the false literal
                if c[0] == false_lit:
                    c[0], c[1] = c[1], c[0]
                first = c[0]
                if self._value(first) == 1:
                    watch[j] = ci
                    j += 1
                    continue
                moved = False
                for k in range(2, len(c)):
                    if self._value(c[k]) != -1:
                        c[1], c[k] = c[k], c[1]
                        self.watches[c[1]].append(ci)
                        moved = True
                        break
                if moved:
                    continue
                watch[j] = ci
                j += 1
                if not self._enqueue(first, ci):
                    # conflict: keep remaining watches in place
                    while i < n:
                        watch[j] = watch[i]
                        j += 1
                        i += 1
                    del watch[j:]
                    return ci
            del watch[j:]
        return None

    # -- conflict analysis ----------------------------------------------------

    def _bump(self, v: int) -> None:
        self.activity[v] += self.var_inc
        if self.activity[v] > 1e100:
            for i in range(1, self.nvars + 1):
                self.activity[i] *= 1e-100
            self.var_inc *= 1e-100

    def _analyze(self, confl: int) -> tuple[list[int], int]:
        learnt = [0]
        seen = [False] * (self.nvars + 1)
        counter = 0
        lit = 0
        idx = len(self.trail) - 1
        cur_level = len(self.trail_lim)
        reason_clause = self.clauses[confl]
        while True:
            for q in reason_clause:
                if q == lit:
                    continue
                v = abs(q)
                if not seen[v] and self.level[v] > 0:
                    seen[v] = True
                    self._bump(v)
                    if self.level[v] >= cur_level:
                        counter += 1
                    else:
                        learnt.append(q)
            while not seen[abs(self.trail[idx])]:
                idx -= 1
            lit = self.trail[idx]
            idx -= 1
            v = abs(lit)
            seen[v] = False
            counter -= 1
            if counter == 0:
                break
            reason_clause = self.clauses[self.reason[v]]
        learnt[0] = -lit
        if len(learnt) == 1:
            return learnt, 0
        bt = max(self.level[abs(q)] for q in learnt[1:])
        # move a literal of the backjump level into the second watch slot
        for k in range(1, len(learnt)):
            if self.level[abs(learnt[k])] == bt:
                learnt[1], learnt[k] = learnt[k], learnt[1]
                break
        return learnt, bt

    def _analyze_final(self, failed: int, assumption_set: set[int]) -> list[int]:
        """Assumptions responsible for `failed` (an assumption literal that
        is false under the current trail)."""
        core = {failed}
        if not self.trail_lim:
            return sorted(core)
        seen = [False] * (self.nvars + 1)
        seen[abs(failed)] = True
        for lit in reversed(self.trail[self.trail_lim[0]:]):
            v = abs(lit)
            if not seen[v]:
                continue
            if self.reason[v] is None:
                if lit in assumption_set:
                    core.add(lit)
            else:
                for q in self.clauses[self.reason[v]]:
                    if self.level[abs(q)] > 0:
                        seen[abs(q)] = True
            seen[v] = False
        return sorted(core, key=abs)

    # -- search ---------------------------------------------------------------

    def _decide(self) -> int:
        best, best_act = 0, -1.0
        act = self.activity
        assign = self.assign
        for v in range(1, self.nvars + 1):
            if assign[v] == 0 and act[v] > best_act:
                best, best_act = v, act[v]
        if best == 0:
            return 0
        return best if self.phase[best] else -best

    @staticmethod
    def _luby(i: int) -> int:
        size, seq = 1, 0
        while size < i + 1:
            seq += 1
            size = 2 * size + 1
        while size - 1 != i:
            size = (size - 1) >> 1
            seq -= 1
            i %= size
        return 1 << seq

    def solve(self, assumptions: Sequence[int] = ()) -> SolveResult:
        self.stats_solves += 1
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise SolverLimit("deadline exceeded")
        self._backtrack(0)
        if not self.ok:
            return SolveResult(UNSAT, core=[])
        if self._propagate() is not None:
            self.ok = False
            return SolveResult(UNSAT, core=[])
        assumption_set = set(assumptions)
        conflicts_here = 0
        restart_idx = 0
        restart_limit = 64 * self._luby(0)
        while True:
            confl = self._propagate()
            if confl is not None:
                self.stats_conflicts += 1
                conflicts_here += 1
                if conflicts_here % 256 == 0 and self.deadline is not None \
                        and time.monotonic() > self.deadline:
                    raise SolverLimit("deadline exceeded")
                if self.conflict_budget is not None and conflicts_here > self.conflict_budget:
                    raise SolverLimit("conflict budget exceeded")
                if not self.trail_lim:
                    self.ok = False
                    return SolveResult(UNSAT, core=[])
                learnt, bt = self._analyze(confl)
                # never backjump above still-pending assumption levels
                self._backtrack(bt)
                if len(learnt) == 1:
                    if not self._enqueue(learnt[0], None):
                        self.ok = False
                        return SolveResult(UNSAT, core=[])
                else:
                    ci = len(self.clauses)
                    self.clauses.append(learnt)
                    self.watches[learnt[0]].append(ci)
                    self.watches[learnt[1]].append(ci)
                    self._enqueue(learnt[0], ci)
                self.var_inc /= 0.95
                if conflicts_here >= restart_limit:
                    restart_idx += 1
                    restart_limit = conflicts_here + 64 * self._luby(restart_idx)
                    self._backtrack(0)
                continue
            lvl = len(self.trail_lim)
            if lvl < len(assumptions):
                a = assumptions[lvl]
                val = self._value(a)
                if val == -1:
                    core = self._analyze_final(a, assumption_set)
                    self._backtrack(0)
                    return SolveResult(UNSAT, core=core)
                self.trail_lim.append(len(self.trail))
                if val == 0:
                    self._enqueue(a, None)
                continue
            lit = self._decide()
            if lit == 0:
                model = [False] * (self.nvars + 1)
                for v in range(1, self.nvars + 1):
                    model[v] = self.assign[v] == 1
                self._backtrack(0)
                if self.verify_models:
                    for c in self.clauses:
                        assert any(model[abs(l)] == (l > 0) for l in c), \
                            "model violates a clause"
                return SolveResult(SAT, model=model)
            self.trail_lim.append(len(self.trail))
            self._enqueue(lit, None)

    def solve_with_core_shrink(self, assumptions: Sequence[int] = ()) -> SolveResult:
        """Like solve(), but greedily shrinks an unsat core by deletion,
        spending at most 2x the initial core size in extra solver calls."""
        res = self.solve(assumptions)
        if res.status != UNSAT or not res.core:
            return res
        core = list(res.core)
        budget = 2 * len(core)
        i = 0
        while i < len(core) and budget > 0:
            trial = core[:i] + core[i + 1:]
            budget -= 1
            sub = self.solve(trial)
            if sub.status == UNSAT:
                core = list(sub.core) if sub.core is not None else trial
                if i >= len(core):
                    break
            else:
                i += 1
        res.core = core
        return res


# ---------------------------------------------------------------------------
# DIMACS + external backend
# ---------------------------------------------------------------------------

def write_dimacs(nvars: int, clauses: Sequence[Sequence[int]]) -> str:
    lines = [f"p cnf {nvars} {len(clauses)}"]
    for c in clauses:
        lines.append(" ".join(str(l) for l in c) + " 0")
    return "\n".join(lines) + "\n"


def read_dimacs(text: str) -> tuple[int, list[list[int]]]:
    nvars = 0
    clauses: list[list[int]] = []
    cur: list[int] = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ValueError(f"bad DIMACS header: {line!r}")
            nvars = int(parts[2])
            continue
        for tok in line.split():
            v = int(tok)
            if v == 0:
                clauses.append(cur)
                cur = []
            else:
                cur.append(v)
    if cur:
        clauses.append(cur)
    return nvars, clauses


class ExternalSolver:
    """Backend that round-trips DIMACS files through an external solver
    process (minisat-style interface: `solver in.cnf out`).  Assumptions
    become unit clauses; cores are recovered by deletion over the
    assumption literals, so any stock solver can be substituted."""

    def __init__(self, command: str, deadline: Optional[float] = None,
                 conflict_budget: Optional[int] = None):
        self.command = command
        self.nvars = 0
        self.clauses: list[list[int]] = []
        self.deadline = deadline
        self.stats_solves = 0
        self.stats_conflicts = 0
        self.ok = True

    def new_var(self) -> int:
        self.nvars += 1
        return self.nvars

    def add_clause(self, lits: Sequence[int]) -> None:
        self.clauses.append(list(lits))

    def _run_once(self, assumptions: Sequence[int]) -> SolveResult:
        self.stats_solves += 1
        cnf = self.clauses + [[a] for a in assumptions]
        text = write_dimacs(self.nvars, cnf)
        with tempfile.TemporaryDirectory(prefix="chainforge-sat-") as d:
            inp = os.path.join(d, "in.cnf")
            outp = os.path.join(d, "out.txt")
            with open(inp, "w") as f:
                f.write(text)
            timeout = None
            if self.deadline is not None:
                timeout = max(0.01, self.deadline - time.monotonic())
            try:
                proc = subprocess.run(shlex.split(self.command) + [inp, outp],
                                      capture_output=True, text=True, timeout=timeout)
            except subprocess.TimeoutExpired as ex:
                raise SolverLimit("external solver timed out") from ex
            out = ""
            if os.path.exists(outp):
                with open(outp) as f:
                    out = f.read()
            out = out + "\n" + proc.stdout
        return self._parse_output(out)

    def _parse_output(self, out: str) -> SolveResult:
        status = None
        values: list[int] = []
        for line in out.splitlines():
            line = line.strip()
            if line in ("SAT", "s SATISFIABLE"):
                status = SAT
            elif line in ("UNSAT", "UNSATISFIABLE", "s UNSATISFIABLE"):
                status = UNSAT
            elif line.startswith("v "):
                values.extend(int(t) for t in line[2:].split())
            elif status == SAT and line and (line[0].isdigit() or line[0] == "-"):
                values.extend(int(t) for t in line.split())
        if status is None:
            raise SolverLimit("external solver produced no verdict")
        if status == UNSAT:
            return SolveResult(UNSAT)
        model = [False] * (self.nvars + 1)
        for v in values:
            if v != 0 and abs(v) <= self.nvars:
                model[abs(v)] = v > 0
        return SolveResult(SAT, model=model)

    def solve(self, assumptions: Sequence[int] = ()) -> SolveResult:
        res = self._run_once(assumptions)
        if res.status != UNSAT:
            return res
        # reduce the assumption set to a core by deletion
        core = list(assumptions)
        i = 0
        while i < len(core):
            trial = core[:i] + core[i + 1:]
            if self._run_once(trial).status == UNSAT:
                core = trial
            else:
                i += 1
        res.core = core
        return res

    def solve_with_core_shrink(self, assumptions: Sequence[int] = ()) -> SolveResult:
        return self.solve(assumptions)


def make_solver(deadline: Optional[float] = None,
                conflict_budget: Optional[int] = None):
    """Build the configured backend: the embedded CDCL solver by default,
    or an external DIMACS solver when CHAINFORGE_SOLVER=external:<cmd>."""
    spec = os.environ.get("CHAINFORGE_SOLVER", "")
    if spec.startswith("external:"):
        return ExternalSolver(spec.split(":", 1)[1], deadline=deadline)
    return Solver(conflict_budget=conflict_budget, deadline=deadline)
