"""A conflict-driven clause-learning SAT solver.

Literals use the DIMACS convention externally (non-zero ints).  Internally a
literal ``x`` maps to index ``2*|x| + (x < 0)`` so negation is ``i ^ 1``.
"""

from __future__ import annotations

import heapq
import random
import time
from dataclasses import dataclass, field

SAT, UNSAT, UNKNOWN = "SAT", "UNSAT", "UNKNOWN"


@dataclass
class SolveStats:
    decisions: int = 0
    conflicts: int = 0
    propagations: int = 0
    restarts: int = 0
    learnts: int = 0
    time: float = 0.0


@dataclass
class SolveResult:
    status: str
    model: dict[int, bool] | None = None
    stats: SolveStats = field(default_factory=SolveStats)

    @property
    def sat(self) -> bool:
        return self.status == SAT

    def value(self, lit: int) -> bool:
        assert self.model is not None
        v = self.model[abs(lit)]
        return v if lit > 0 else not v


def luby(i: int) -> int:
    """i-th element (0-based) of the Luby sequence 1 1 2 1 1 2 4 ..."""
    size, seq = 1, 0
    while size < i + 1:
        seq += 1
        size = 2 * size + 1
    while size - 1 != i:
        size = (size - 1) >> 1
        seq -= 1
        i = i % size
    return 1 << seq


def _idx(lit: int) -> int:
    return (lit << 1) if lit > 0 else ((-lit) << 1) | 1


def _lit(i: int) -> int:
    return -(i >> 1) if i & 1 else i >> 1


class Solver:
    """Incremental CDCL solver.

    Features: two watched literals with implicit binary clauses, VSIDS with
    phase saving, first-UIP learning with clause minimisation, Luby restarts,
    LBD-based learnt-clause reduction and solving under assumptions.
    """

    restart_unit = 100
    var_decay = 0.95
    reduce_base = 2000
    reduce_inc = 300

    def __init__(self, seed: int = 0):
        self.n = 0
        self.value: list[int] = [0, 0]      # per literal index: 1 true, -1 false, 0 unassigned
        self.level: list[int] = [0]
        self.reason: list[list[int] | None] = [None]
        self.activity: list[float] = [0.0]
        self.phase: list[int] = [1]         # saved phase (1 means negative literal)
        self.watches: list[list[list[int]]] = [[], []]
        self.bins: list[list[int]] = [[], []]
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.heap: list[tuple[float, int]] = []
        self.queued: list[float] = [-1.0]   # activity of each var's live heap entry, -1 if none
        self.var_inc = 1.0
        self.clauses: list[list[int]] = []
        self.learnts: list[list[int]] = []
        self.lbd: dict[int, int] = {}
        self.original: list[list[int]] = []   # as given, DIMACS literals (for model checking)
        self.ok = True
        # a non-zero seed perturbs the initial variable order
        self.rng = random.Random(seed) if seed else None
        self.stats = SolveStats()
        self.seen: list[int] = [0]

    # ------------------------------------------------------------ variables

    def new_var(self) -> int:
        self.n += 1
        v = self.n
        self.value += [0, 0]
        self.level.append(0)
        self.reason.append(None)
        self.activity.append(self.rng.random() * 1e-6 if self.rng else 0.0)
        self.phase.append(1)
        self.watches += [[], []]
        self.bins += [[], []]
        self.seen.append(0)
        self.queued.append(self.activity[v])
        heapq.heappush(self.heap, (-self.activity[v], v))
        return v

    def ensure_vars(self, n: int) -> None:
        while self.n < n:
            self.new_var()

    @property
    def num_vars(self) -> int:
        return self.n

    @property
    def num_clauses(self) -> int:
        return len(self.original)

    # -------------------------------------------------------------- clauses

    def add_clause(self, clause) -> bool:
        """Add a clause at decision level 0.  Returns False once the formula is UNSAT."""
        lits = list(clause)
        self.original.append(lits)
        if not self.ok:
            return False
        if self.trail_lim:
            self._cancel_until(0)
        m = 0
        for l in lits:
            if l == 0:
                raise ValueError("literal 0 in clause")
            m = max(m, abs(l))
        self.ensure_vars(m)
        value = self.value
        out: list[int] = []
        seen = set()
        for l in lits:
            i = _idx(l)
            if i in seen:
                continue
            if (i ^ 1) in seen or value[i] == 1:
                return True           # tautology or satisfied at level 0
            if value[i] == -1:
                continue
            seen.add(i)
            out.append(i)
        if not out:
            self.ok = False
            return False
        if len(out) == 1:
            self._assign(out[0], None)
            if self._propagate() is not None:
                self.ok = False
            return self.ok
        self._attach(out)
        self.clauses.append(out)
        return True

    def _attach(self, c: list[int]) -> None:
        if len(c) == 2:
            a, b = c
            self.bins[a ^ 1].append(b)
            self.bins[b ^ 1].append(a)
        else:
            self.watches[c[0] ^ 1].append(c)
            self.watches[c[1] ^ 1].append(c)

    # ----------------------------------------------------------- assignment

    def _assign(self, i: int, reason) -> None:
        v = i >> 1
        self.value[i] = 1
        self.value[i ^ 1] = -1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(i)

    def _cancel_until(self, lvl: int) -> None:
        if len(self.trail_lim) <= lvl:
            return
        start = self.trail_lim[lvl]
        value, phase, reason, act, heap = self.value, self.phase, self.reason, self.activity, self.heap
        queued = self.queued
        push = heapq.heappush
        for i in self.trail[start:]:
            v = i >> 1
            value[i] = 0
            value[i ^ 1] = 0
            phase[v] = i & 1
            reason[v] = None
            a = act[v]
            if queued[v] != a:
                queued[v] = a
                push(heap, (-a, v))
        del self.trail[start:]
        del self.trail_lim[lvl:]
        self.qhead = start

    def _propagate(self):
        """Unit propagation; returns a conflicting clause (list of indices) or None."""
        value, trail, watches, bins = self.value, self.trail, self.watches, self.bins
        level, reason = self.level, self.reason
        lvl = len(self.trail_lim)
        qhead = self.qhead
        props = 0
        while qhead < len(trail):
            p = trail[qhead]
            qhead += 1
            props += 1
            # binary clauses (¬p ∨ q): p true forces q
            for q in bins[p]:
                vq = value[q]
                if vq == 1:
                    continue
                if vq == -1:
                    self.qhead = qhead
                    self.stats.propagations += props
                    return [q, p ^ 1]
                value[q] = 1
                value[q ^ 1] = -1
                v = q >> 1
                level[v] = lvl
                reason[v] = [q, p ^ 1]
                trail.append(q)
            false_lit = p ^ 1
            ws = watches[p]
            i = j = 0
            n = len(ws)
            while i < n:
                c = ws[i]
                i += 1
                if c[0] == false_lit:
                    c[0] = c[1]
                    c[1] = false_lit
                first = c[0]
                if value[first] == 1:
                    ws[j] = c
                    j += 1
                    continue
                for k in range(2, len(c)):
                    lk = c[k]
                    if value[lk] != -1:
                        c[1] = lk
                        c[k] = false_lit
                        watches[lk ^ 1].append(c)
                        break
                else:
                    ws[j] = c
                    j += 1
                    if value[first] == -1:
                        while i < n:
                            ws[j] = ws[i]
                            j += 1
                            i += 1
                        del ws[j:]
                        self.qhead = qhead
                        self.stats.propagations += props
                        return c
                    value[first] = 1
                    value[first ^ 1] = -1
                    v = first >> 1
                    level[v] = lvl
                    reason[v] = c
                    trail.append(first)
            del ws[j:]
        self.qhead = qhead
        self.stats.propagations += props
        return None

    # ------------------------------------------------------------- learning

    def _bump(self, v: int) -> None:
        act = self.activity
        act[v] += self.var_inc
        if act[v] > 1e100:
            for u in range(1, self.n + 1):
                act[u] *= 1e-100
            self.var_inc *= 1e-100
            self._rebuild_heap()
        elif self.value[2 * v] == 0:
            self.queued[v] = act[v]
            heapq.heappush(self.heap, (-act[v], v))
            if len(self.heap) > 8 * self.n + 1024:
                self._rebuild_heap()

    def _rebuild_heap(self) -> None:
        act, value = self.activity, self.value
        queued = self.queued = [-1.0] * (self.n + 1)
        heap = []
        for u in range(1, self.n + 1):
            if value[2 * u] == 0:
                queued[u] = act[u]
                heap.append((-act[u], u))
        heapq.heapify(heap)
        self.heap = heap

    def _analyze(self, confl: list[int]) -> tuple[list[int], int]:
        seen, level, reason, trail = self.seen, self.level, self.reason, self.trail
        cur = len(self.trail_lim)
        learnt = [0]
        counter = 0
        p = -1
        idx = len(trail) - 1
        touched = []
        c = confl
        while True:
            for q in c:
                if q == p:
                    continue
                v = q >> 1
                if not seen[v] and level[v] > 0:
                    seen[v] = 1
                    touched.append(v)
                    self._bump(v)
                    if level[v] >= cur:
                        counter += 1
                    else:
                        learnt.append(q)
            while not seen[trail[idx] >> 1]:
                idx -= 1
            p = trail[idx]
            idx -= 1
            counter -= 1
            if counter == 0:
                break
            c = reason[p >> 1]
            seen[p >> 1] = 0
        learnt[0] = p ^ 1
        # local minimisation: drop literals implied by others in the clause
        keep = [learnt[0]]
        for q in learnt[1:]:
            r = reason[q >> 1]
            if r is None:
                keep.append(q)
                continue
            for x in r:
                vx = x >> 1
                if vx != q >> 1 and not seen[vx] and level[vx] > 0:
                    keep.append(q)
                    break
        for v in touched:
            seen[v] = 0
        learnt = keep
        if len(learnt) == 1:
            return learnt, 0
        # put the highest-level literal second
        best = 1
        for k in range(2, len(learnt)):
            if level[learnt[k] >> 1] > level[learnt[best] >> 1]:
                best = k
        learnt[1], learnt[best] = learnt[best], learnt[1]
        return learnt, level[learnt[1] >> 1]

    def _lbd(self, c: list[int]) -> int:
        level = self.level
        return len({level[i >> 1] for i in c})

    def _reduce_db(self) -> None:
        lbd = self.lbd
        locked = set()
        for i in self.trail:
            r = self.reason[i >> 1]
            if r is not None:
                locked.add(id(r))
        cand = [c for c in self.learnts if len(c) > 2]
        cand.sort(key=lambda c: (lbd.get(id(c), 99), len(c)))
        keep_n = len(cand) // 2
        removed = set()
        for c in cand[keep_n:]:
            if lbd.get(id(c), 99) > 2 and id(c) not in locked:
                removed.add(id(c))
        if not removed:
            return
        self.learnts = [c for c in self.learnts if id(c) not in removed]
        for k in removed:
            lbd.pop(k, None)
        for ws in self.watches:
            if ws:
                ws[:] = [c for c in ws if id(c) not in removed]

    # --------------------------------------------------------------- search

    def _pick(self) -> int:
        heap, value, queued = self.heap, self.value, self.queued
        pop = heapq.heappop
        while heap:
            a, v = pop(heap)
            if -a != queued[v]:
                continue                  # superseded entry
            queued[v] = -1.0
            if value[2 * v] == 0:
                return 2 * v + self.phase[v]
        # stale heap entries can hide unassigned variables after rescaling
        for v in range(1, self.n + 1):
            if value[2 * v] == 0:
                return 2 * v + self.phase[v]
        return -1

    def solve(self, assumptions=(), deadline: float | None = None,
              conflict_budget: int | None = None) -> SolveResult:
        t0 = time.monotonic()
        stats = self.stats = SolveStats()
        res = self._search(list(assumptions), deadline, conflict_budget)
        stats.time = time.monotonic() - t0
        stats.learnts = len(self.learnts)
        if res == SAT:
            model = {v: self.value[2 * v] == 1 for v in range(1, self.n + 1)}
            self._cancel_until(0)
            self._check_model(model)
            return SolveResult(SAT, model, stats)
        self._cancel_until(0)
        return SolveResult(res, None, stats)

    def _check_model(self, model: dict[int, bool]) -> None:
        for c in self.original:
            for l in c:
                if model[abs(l)] == (l > 0):
                    break
            else:
                raise AssertionError(f"internal error: model violates clause {c}")

    def _search(self, assumptions: list[int], deadline, budget) -> str:
        if not self.ok:
            return UNSAT
        for a in assumptions:
            self.ensure_vars(abs(a))
        if self._propagate() is not None:
            self.ok = False
            return UNSAT
        assume = [_idx(a) for a in assumptions]
        stats = self.stats
        restart_i = 0
        next_restart = luby(0) * self.restart_unit
        conflicts_here = 0
        next_reduce = self.reduce_base + len(self.learnts)
        value = self.value
        while True:
            confl = self._propagate()
            if confl is not None:
                stats.conflicts += 1
                conflicts_here += 1
                if not self.trail_lim:
                    self.ok = False
                    return UNSAT
                learnt, bt = self._analyze(confl)
                self._cancel_until(bt)
                if len(learnt) == 1:
                    self._assign(learnt[0], None)
                else:
                    self._attach(learnt)
                    if len(learnt) > 2:
                        self.learnts.append(learnt)
                        self.lbd[id(learnt)] = self._lbd(learnt)
                    self._assign(learnt[0], learnt)
                self.var_inc /= self.var_decay
                if budget is not None and stats.conflicts >= budget:
                    return UNKNOWN
                if deadline is not None and (stats.conflicts & 63) == 0 and time.monotonic() > deadline:
                    return UNKNOWN
                continue
            if conflicts_here >= next_restart:
                restart_i += 1
                stats.restarts += 1
                conflicts_here = 0
                next_restart = luby(restart_i) * self.restart_unit
                self._cancel_until(0)
                if deadline is not None and time.monotonic() > deadline:
                    return UNKNOWN
            if len(self.learnts) >= next_reduce:
                self._reduce_db()
                next_reduce = len(self.learnts) + self.reduce_base + self.reduce_inc * stats.restarts
            # decisions: assumptions first
            nxt = -1
            while len(self.trail_lim) < len(assume):
                a = assume[len(self.trail_lim)]
                if value[a] == 1:
                    self.trail_lim.append(len(self.trail))
                elif value[a] == -1:
                    return UNSAT
                else:
                    nxt = a
                    break
            if nxt < 0:
                nxt = self._pick()
                if nxt < 0:
                    return SAT
                stats.decisions += 1
                if deadline is not None and (stats.decisions & 1023) == 0 and time.monotonic() > deadline:
                    return UNKNOWN
            self.trail_lim.append(len(self.trail))
            self._assign(nxt, None)


def solve_cnf(cnf, assumptions=(), deadline: float | None = None,
              conflict_budget: int | None = None, seed: int = 0) -> SolveResult:
    """One-shot solve of a :class:`~redact.attack.tseitin.Cnf`-like object."""
    s = Solver(seed)
    s.ensure_vars(cnf.num_vars)
    for c in cnf.clauses:
        if not s.add_clause(c):
            break
    r = s.solve(assumptions, deadline, conflict_budget)
    if r.model is not None:
        for v in range(s.n + 1, cnf.num_vars + 1):
            r.model[v] = False
    return r
