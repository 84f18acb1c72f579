"""Oracle-guided SAT attack on a key-exposed, loop-unrolled fabric."""

from __future__ import annotations

import csv
import io
import json
import logging
import random
import time
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

from ..errors import AttackTimeout, OracleUnstable, RedactError
from ..fabric import Bitstream, Fabric, bit_categories, load_bitstream
from ..netlist import Netlist
from ..sat.cdcl import SAT, UNKNOWN, UNSAT, Solver, SolveResult
from ..sat.dimacs import solve_external
from ..sim import exhaustive_inputs, simulate_lanes
from .acyclic import add_acyclicity, cyclic_components
from .keys import KeyedNetlist, expose_keys
from .loops import STABLE_PORT, Unrolled, find_feedback_set, frame_net, init_net, unroll
from .tseitin import CircuitEncoder, Cnf, topo_cells, tseitin_encode

log = logging.getLogger(__name__)

KEY_FOUND, TIMEOUT, INCONSISTENT = "KeyFound", "TO", "Inconsistent"
MAX_EXHAUSTIVE = 16
FIXPOINT = 0        # frame-schedule entry for the one-frame fixed-point encoding


class KnownBits(dict):
    """Partial key assignment: key index -> 0/1."""

    def __init__(self, items: Mapping[int, int] | None = None, key_size: int | None = None):
        super().__init__()
        for k, v in (items or {}).items():
            k = int(k)
            if k in self:
                raise ValueError(f"key bit {k} given twice")
            if v not in (0, 1):
                raise ValueError(f"key bit {k} must be 0 or 1, got {v!r}")
            if k < 0 or (key_size is not None and k >= key_size):
                raise ValueError(f"key bit {k} out of range")
            self[k] = v

    @classmethod
    def from_bitstream(cls, b: Bitstream, indices) -> "KnownBits":
        return cls({i: b.bits[i] for i in indices}, len(b.bits))


# --------------------------------------------------------------------------
# oracle

class Oracle:
    """Input/output queries against a configured fabric (fixed-point simulation)."""

    def __init__(self, f: Fabric, b: Bitstream, kn: KeyedNetlist):
        self.netlist = load_bitstream(f, b)
        self.kn = kn
        driver = f.netlist.driver
        self._ff_cell = {net: driver[net].id for net in kn.scan_inputs}
        self._ports = [(p, p) for p in kn.outputs]
        self._ports += [(p, p[4:]) for p in kn.scan_outputs]
        self.queries = 0

    def query_lanes(self, lanes: Mapping[str, int], nlanes: int) -> tuple[dict[str, int], int]:
        ins = {i: lanes[i] for i in self.kn.inputs}
        for extra in self.netlist.inputs:
            if extra not in ins and extra not in self.netlist.clocks:
                ins[extra] = 0
        state = {self._ff_cell[n]: lanes[n] for n in self.kn.scan_inputs}
        res = simulate_lanes(self.netlist, ins, nlanes, "fixed_point", state_lanes=state)
        outs = res.outputs()
        d_net = {c.id: c.inputs[0] for c in self.netlist.cells if c.kind == "DFF"}
        vals = {}
        for port, src in self._ports:
            vals[port] = outs[port] if port in outs else res.net(d_net[src])
        return vals, res.stable

    def __call__(self, vector: Mapping[str, int]) -> dict[str, int]:
        self.queries += 1
        vals, stable = self.query_lanes(vector, 1)
        if not stable:
            raise OracleUnstable(f"oracle oscillates on input {dict(vector)}")
        return vals


# --------------------------------------------------------------------------
# solver back ends

class InternalBackend:
    name = "internal"

    def __init__(self, cnf: Cnf, seed: int = 0):
        self.solver = Solver(seed)
        self.cnf = cnf

    def add_clause(self, c: list[int]) -> None:
        self.solver.add_clause(c)

    def solve(self, assumptions, deadline) -> SolveResult:
        return self.solver.solve(assumptions, deadline)


class ExternalBackend:
    name = "external"

    def __init__(self, cnf: Cnf, cmd: str | None = None):
        self.cnf = cnf
        self.cmd = cmd

    def add_clause(self, c: list[int]) -> None:
        pass                     # the shared Cnf already records it

    def solve(self, assumptions, deadline) -> SolveResult:
        left = None if deadline is None else max(0.01, deadline - time.monotonic())
        return solve_external(self.cnf, assumptions, self.cmd, left)


class CrossCheckBackend:
    """Runs internal and external solvers side by side and insists they agree."""

    name = "both"

    def __init__(self, cnf: Cnf, cmd: str | None = None, seed: int = 0):
        self.primary = InternalBackend(cnf, seed)
        self.secondary = ExternalBackend(cnf, cmd)
        self.checks = 0

    def add_clause(self, c: list[int]) -> None:
        self.primary.add_clause(c)

    def solve(self, assumptions, deadline) -> SolveResult:
        a = self.primary.solve(assumptions, deadline)
        b = self.secondary.solve(assumptions, deadline)
        if UNKNOWN not in (a.status, b.status):
            if a.status != b.status:
                raise RedactError(f"solver disagreement: internal {a.status}, external {b.status}")
            self.checks += 1
        return a


def make_backend(kind: str, cnf: Cnf, seed: int = 0, cmd: str | None = None):
    if kind == "internal":
        return InternalBackend(cnf, seed)
    if kind == "external":
        return ExternalBackend(cnf, cmd)
    if kind == "both":
        return CrossCheckBackend(cnf, cmd, seed)
    raise ValueError(f"unknown solver {kind!r}")


# --------------------------------------------------------------------------
# statistics

@dataclass
class AttackStats:
    fabric: str = ""
    circuit: str = ""
    unroll_factor: int = 0
    bitstream: int = 0          # total key bits
    key_size: int = 0           # unknown key bits attacked
    known: int = 0
    category: str = ""
    clauses: int = 0
    variables: int = 0
    circuit_clauses: int = 0    # plain encoding of one unrolled copy
    circuit_variables: int = 0
    dip_count: int = 0
    time: float = 0.0
    outcome: str = ""
    detail: str = ""
    seed: int = 0
    solver: str = "internal"
    frame0: str = "zero"
    verified: bool = False
    solve_calls: int = 0
    conflicts: int = 0
    frames: int = 0             # frames in the last unrolling tried
    attempts: int = 0

    CSV_FIELDS = ("fabric", "circuit", "unroll_factor", "bitstream", "key_size", "known",
                  "category", "clauses", "variables", "dip_count", "time", "outcome")

    def to_json(self, timing: bool = True) -> str:
        d = asdict(self)
        if not timing:
            d.pop("time")
        return json.dumps(d, indent=1, sort_keys=True)

    def row(self, timing: bool = True) -> dict:
        d = {k: getattr(self, k) for k in self.CSV_FIELDS}
        d["time"] = f"{self.time:.3f}" if timing else ""
        return d


def stats_csv(rows: Sequence[AttackStats], timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=AttackStats.CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.row(timing))
    return buf.getvalue()


# --------------------------------------------------------------------------
# the attack

@dataclass
class _Copy:
    outputs: list[int]
    stable: int


@dataclass
class AttackResult:
    key: list[int] | None
    stats: AttackStats
    dips: list[dict[str, int]] = field(default_factory=list)


class _Miter:
    """Two key copies of an unrolled netlist plus the I/O constraints seen so far."""

    def __init__(self, un: Unrolled, known: Mapping[int, int], backend_kind: str,
                 seed: int, cmd: str | None, miter_stability: str, block_dips: bool,
                 acyclic: KeyedNetlist | None = None, fixpoint: bool = False):
        self.un = un
        self.kn = un.keyed
        self.n: Netlist = un.netlist
        self.order = topo_cells(self.n)
        self.cnf = Cnf()
        self.backend = make_backend(backend_kind, self.cnf, seed, cmd)
        self.enc = enc = CircuitEncoder(self.cnf, self.backend.add_clause)
        self.known = known
        self.block_dips = block_dips
        self.out_ports = [p for p, _ in self.n.outputs if p != STABLE_PORT]
        self.out_net = dict(self.n.outputs)
        self.in_names = list(self.kn.all_inputs)
        self.fixpoint = fixpoint

        self.xs = {nm: enc.new_var() for nm in self.in_names}
        self.ka, self.kb = self.key_lits(), self.key_lits()
        if acyclic is not None:
            # restrict both copies to keys whose active routing is loop-free
            comps = cyclic_components(acyclic.netlist)
            for keys in (self.ka, self.kb):
                add_acyclicity(enc, acyclic.netlist, dict(zip(acyclic.keys, keys)), comps)
        a, b = self.copy(self.ka, self.xs), self.copy(self.kb, self.xs)
        differ = enc.or_many([enc.XOR(p, q) for p, q in zip(a.outputs, b.outputs)])
        if fixpoint:
            # loop-free keys always have exactly one fixed point
            enc.assert_lit(a.stable)
            enc.assert_lit(b.stable)
            diff = differ
        else:
            diff = enc.AND(enc.AND(a.stable, b.stable), differ)
        if miter_stability not in ("either", "both"):
            raise ValueError("miter_stability must be 'either' or 'both'")
        if miter_stability == "either" and not fixpoint:
            diff = enc.OR(diff, enc.XOR(a.stable, b.stable))
        # the miter condition only binds while ``act`` is assumed
        self.act = enc.new_var()
        enc._emit([-self.act, diff])

    def key_lits(self) -> list[int]:
        enc = self.enc
        return [enc.const(self.known[i]) if i in self.known else enc.new_var()
                for i in range(self.kn.key_size)]

    def copy(self, keys: list[int], inputs: Mapping[str, int]) -> _Copy:
        assign = dict(inputs)
        for i, k in enumerate(self.kn.keys):
            assign[k] = keys[i]
        for p in self.un.pseudo_inputs:
            assign[p] = self.enc.new_var()
        lits = self.enc.encode(self.n, assign, self.order)
        outs = [lits[self.out_net[p]] for p in self.out_ports]
        if self.fixpoint:
            enc = self.enc
            same = [-enc.XOR(lits[init_net(c)], lits[frame_net(c, 0)]) for c in self.un.cut]
            stab = -enc.or_many([-e for e in same])
        elif self.un.stabilize:
            stab = lits[self.out_net[STABLE_PORT]]
        else:
            stab = self.enc.TRUE
        return _Copy(outs, stab)

    def observe(self, dip: Mapping[str, int], y: Mapping[str, int]) -> bool:
        """Pin both key copies to the oracle's answer on ``dip``."""
        enc = self.enc
        if self.block_dips:
            # this input can no longer distinguish the copies
            enc._emit([-self.xs[nm] if v else self.xs[nm] for nm, v in dip.items()]
                      + [-self.act])
        const_in = {nm: enc.const(dip[nm]) for nm in self.in_names}
        ok = True
        for keys in (self.ka, self.kb):
            c = self.copy(keys, const_in)
            ok &= enc.assert_lit(c.stable)
            for port, lit in zip(self.out_ports, c.outputs):
                ok &= enc.assert_lit(lit if y[port] else -lit)
        return ok


def _verify(kn: KeyedNetlist, key: Sequence[int], oracle: Oracle, seed: int
            ) -> tuple[bool, str, dict[str, int] | None]:
    """Compare the keyed netlist under ``key`` against the oracle.

    Returns (ok, how, counterexample input or None).
    """
    names = kn.all_inputs
    if len(names) <= MAX_EXHAUSTIVE:
        lanes, nl = exhaustive_inputs(names)
    else:
        nl = 4096
        rng = random.Random(seed)
        lanes = {nm: rng.getrandbits(nl) for nm in names}
    mask = (1 << nl) - 1
    ins = dict(lanes)
    for i, k in enumerate(kn.keys):
        ins[k] = mask if key[i] else 0
    got = simulate_lanes(kn.netlist, ins, nl, "fixed_point")
    want, ostable = oracle.query_lanes(lanes, nl)
    how = "exhaustive" if len(names) <= MAX_EXHAUSTIVE else f"{nl} random vectors"

    def vector(bad: int) -> dict[str, int]:
        lane = (bad & -bad).bit_length() - 1
        return {nm: (lanes[nm] >> lane) & 1 for nm in names}

    if ostable != mask:
        return False, "oracle unstable on some verification vectors", None
    if got.stable != mask:
        return False, "recovered key oscillates on some inputs", vector(mask & ~got.stable)
    outs = got.outputs()
    for p in kn.all_outputs:
        if outs[p] != want[p]:
            return False, f"output {p} differs", vector(outs[p] ^ want[p])
    return True, how, None


def frame_schedule(U: int, frames: int | str | None) -> list[int]:
    """Frame counts to try: ``"full"`` is the ``U+1`` frame unrolling,
    ``"deepen"`` grows from two frames by about half each step up to it."""
    full = U + 1
    if U == 0:
        return [1]
    if frames == "full" or frames is None:
        return [full]
    if isinstance(frames, int):
        if frames < 2:
            raise ValueError("frames must be at least 2")
        return [min(frames, full)]
    if frames == "fixpoint":
        return [FIXPOINT]
    if frames != "deepen":
        raise ValueError(f"unknown frame policy {frames!r}")
    out, F = [], 2
    while F < full:
        out.append(F)
        F = max(F + 1, (3 * F) // 2)
    out.append(full)
    return out


def sat_attack(kn: KeyedNetlist, oracle: Oracle, known: Mapping[int, int] | None = None,
               timeout: float | None = None, max_iterations: int | None = None,
               max_clauses: int | None = None, max_cells: int | None = 5_000_000,
               frame0: str = "zero", stabilize: bool = True, solver: str = "internal",
               solver_cmd: str | None = None, seed: int = 0, verify: bool = True,
               fabric_name: str = "", circuit: str = "", category: str = "",
               miter_stability: str = "either", frames: int | str = "deepen",
               block_dips: bool = True, acyclic_keys: bool = False) -> AttackResult:
    """DIP loop over a two-copy miter of the unrolled keyed netlist.

    Frame counts follow :func:`frame_schedule`.  A bounded unrolling is only
    abandoned when no key reproduces the oracle within it, or when the key
    it yields fails verification; I/O observations carry over to the next
    attempt, so every oracle query is made once.
    """
    t0 = time.monotonic()
    deadline = None if timeout is None else t0 + timeout
    known = KnownBits(known or {}, kn.key_size)
    st = AttackStats(fabric=fabric_name or kn.netlist.name, circuit=circuit,
                     bitstream=kn.key_size, key_size=kn.key_size - len(known),
                     known=len(known), category=category, seed=seed, solver=solver,
                     frame0=frame0)
    observed: list[tuple[dict[str, int], dict[str, int]]] = []

    def finish(outcome: str, key=None, detail: str = "") -> AttackResult:
        st.outcome = outcome
        st.detail = detail
        st.dip_count = len(observed)
        st.time = time.monotonic() - t0
        return AttackResult(key, st, [d for d, _ in observed])

    try:
        fs = find_feedback_set(kn, deadline)
    except AttackTimeout as e:
        return finish(TIMEOUT, detail=str(e))
    st.unroll_factor = len(fs)
    schedule = frame_schedule(len(fs), frames)
    seen: set[tuple[int, ...]] = set()
    detail = ""
    step = 0
    while step < len(schedule):
        F = schedule[step]
        last = step == len(schedule) - 1
        st.frames = F
        st.attempts += 1
        fixpoint = F == FIXPOINT and len(fs) > 0
        try:
            if fixpoint:
                un = unroll(kn, fs, "free", False, deadline, max_cells, 1)
            else:
                un = unroll(kn, fs, frame0, stabilize, deadline, max_cells,
                            F if F != len(fs) + 1 else None)
        except AttackTimeout as e:
            return finish(TIMEOUT, detail=str(e))
        plain = tseitin_encode(un.netlist)
        st.circuit_clauses, st.circuit_variables = plain.num_clauses, plain.num_vars
        del plain
        m = _Miter(un, known, solver, seed, solver_cmd, miter_stability, block_dips,
                   kn if acyclic_keys or fixpoint else None, fixpoint)

        def sync(res: SolveResult | None = None) -> None:
            st.clauses, st.variables = m.cnf.num_clauses, m.cnf.num_vars
            if res is not None:
                st.solve_calls += 1
                st.conflicts += res.stats.conflicts

        consistent = all(m.observe(d, y) for d, y in observed)
        while consistent:
            sync()
            if max_iterations is not None and len(observed) >= max_iterations:
                return finish(TIMEOUT, detail=f"iteration cap {max_iterations} reached")
            if max_clauses is not None and m.cnf.num_clauses > max_clauses:
                return finish(TIMEOUT, detail=f"CNF exceeds {max_clauses} clauses")
            res = m.backend.solve([m.act], deadline)
            sync(res)
            log.debug("frames %d, iteration %d: %s after %d conflicts, %d clauses, %.2fs",
                      F, len(observed), res.status, res.stats.conflicts, st.clauses,
                      res.stats.time)
            if res.status == UNKNOWN:
                return finish(TIMEOUT, detail="solver budget exhausted")
            if res.status == UNSAT:
                break
            dip = {nm: int(res.value(v)) for nm, v in m.xs.items()}
            sig = tuple(dip[nm] for nm in m.in_names)
            if sig in seen:
                return finish(INCONSISTENT, detail="DIP recurred")
            seen.add(sig)
            try:
                y = oracle(dip)
            except OracleUnstable as e:
                return finish(INCONSISTENT, detail=str(e))
            observed.append((dip, y))
            consistent = m.observe(dip, y)
        sync()
        if not consistent:
            detail = f"no key reproduces the oracle within {F} frames"
            log.debug(detail)
            step += 1
            continue
        res = m.backend.solve([], deadline)
        sync(res)
        if res.status == UNKNOWN:
            return finish(TIMEOUT, detail="solver budget exhausted")
        if res.status != SAT:
            detail = f"no key reproduces the oracle within {F} frames"
            log.debug(detail)
            step += 1
            continue
        key = [int(res.value(l)) if abs(l) != 1 else int(l == m.enc.TRUE) for l in m.ka]
        for i, v in known.items():
            key[i] = v
        if not verify:
            return finish(KEY_FOUND, key, detail="unverified")
        good, how, cex = _verify(kn, key, oracle, seed)
        if good:
            st.verified = True
            return finish(KEY_FOUND, key, detail=f"verified ({how}), {F} frames")
        detail = f"key from {F} frames failed verification: {how}"
        log.debug(detail)
        sig = None if cex is None else tuple(cex[nm] for nm in m.in_names)
        if sig is not None and sig not in seen:
            # refine with the counterexample at the same depth
            seen.add(sig)
            try:
                observed.append((cex, oracle(cex)))
            except OracleUnstable as e:
                return finish(INCONSISTENT, detail=str(e))
            continue
        if last:
            return finish(INCONSISTENT, key, detail=detail)
        step += 1
    return finish(INCONSISTENT, detail=detail or "no consistent key")


# --------------------------------------------------------------------------
# campaign helpers

def attack_fabric(f: Fabric, b: Bitstream, known: Mapping[int, int] | None = None,
                  category: str = "", circuit: str = "", **kw) -> AttackResult:
    kn = expose_keys(f)
    oracle = Oracle(f, b, kn)
    # key i is bit i: discovery order equals the bit map order
    return sat_attack(kn, oracle, known, category=category, circuit=circuit,
                      fabric_name=kw.pop("fabric_name", f"{f.params.W}x{f.params.W}"), **kw)


def category_attack(f: Fabric, b: Bitstream, category: str, **kw) -> AttackResult:
    cats = {bi.index: bi.category for bi in f.bit_map}
    if category not in bit_categories(f):
        raise ValueError(f"unknown category {category!r}")
    known = {i: b.bits[i] for i, c in cats.items() if c != category}
    return attack_fabric(f, b, known, category=category, **kw)


@dataclass
class SweepRow:
    fraction: float
    trial: int
    unknown: int
    result: AttackStats
    key: list[int] | None = None


def known_subset(B: int, fraction: float, rng: random.Random) -> list[int]:
    return sorted(rng.sample(range(B), round(fraction * B)))


def sweep_known_bits(f: Fabric, b: Bitstream, fractions: Sequence[float], trials: int,
                     seed: int = 0, **kw) -> list[SweepRow]:
    """Attack with a seeded random fraction of the key given away."""
    rows = []
    for fi, frac in enumerate(fractions):
        if not 0.0 <= frac <= 1.0:
            raise ValueError(f"fraction {frac} outside [0, 1]")
        for t in range(trials):
            rng = random.Random(f"{seed}:{fi}:{t}")
            idx = known_subset(f.num_bits, frac, rng)
            r = attack_fabric(f, b, {i: b.bits[i] for i in idx}, seed=seed, **kw)
            rows.append(SweepRow(frac, t, f.num_bits - len(idx), r.stats, r.key))
    return rows
