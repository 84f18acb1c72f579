"""Combinational, fixed-point and clocked simulation.

All evaluation is bit-parallel: a net value is a Python int whose bit ``l``
is the net's value in lane ``l``.  ``simulate`` wraps the lane engine for a
single vector; ``simulate_lanes`` is what the exhaustive checks use.

Fixed-point mode is synchronous: every step recomputes all cell outputs from
the previous step's values, starting from an all-zero net assignment (inputs
and flip-flop outputs held at their given values).  A two-inverter ring
therefore oscillates rather than latching.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import CycleError, OscillationError
from .netlist import Cell, Netlist

# opcode per kind
_OP = {"CONST0": 0, "CONST1": 1, "INPUT_BUF": 2, "OUTPUT_BUF": 2, "NOT": 3,
       "AND2": 4, "OR2": 5, "XOR2": 6, "MUX2": 7, "LUT": 8}


def eval_lut(table: int, k: int, ins: Sequence[int], mask: int) -> int:
    """Evaluate a LUT on lane values by folding its table as a MUX2 tree."""
    level = [mask if (table >> i) & 1 else 0 for i in range(1 << k)]
    for j in range(k):
        x = ins[j]
        nx = ~x & mask
        level = [lo if lo == hi else (lo & nx) | (hi & x)
                 for lo, hi in zip(level[0::2], level[1::2])]
    return level[0]


class Compiled:
    """Integer-indexed form of a netlist used by every simulation mode."""

    def __init__(self, n: Netlist):
        self.netlist = n
        self.index = {net: i for i, net in enumerate(n.nets)}
        idx = self.index
        self.comb: list[tuple] = []      # (op, out, ins, table, k)
        self.dff_out: dict[str, int] = {}
        self.dff_cells: list[Cell] = []
        for c in n.cells:
            if c.kind == "DFF":
                self.dff_cells.append(c)
                self.dff_out[c.id] = idx[c.output]
                continue
            self.comb.append((_OP[c.kind], idx[c.output], tuple(idx[i] for i in c.inputs),
                              c.table, c.k))
        self.input_idx = [idx[i] for i in n.inputs]
        self.consumers: list[list[int]] = [[] for _ in n.nets]
        for ci, (_, _, ins, _, _) in enumerate(self.comb):
            for i in set(ins):
                self.consumers[i].append(ci)
        self._topo: list[int] | None = None
        self._topo_err: str | None = None

    def topo_order(self) -> list[int]:
        """Comb cells in dependency order; raises CycleError on a combinational cycle."""
        if self._topo is None and self._topo_err is None:
            n_nets = len(self.index)
            driver = [-1] * n_nets
            for ci, cell in enumerate(self.comb):
                driver[cell[1]] = ci
            indeg = [0] * len(self.comb)
            for ci, (_, _, ins, _, _) in enumerate(self.comb):
                indeg[ci] = sum(1 for i in ins if driver[i] >= 0)
            ready = [ci for ci, d in enumerate(indeg) if d == 0]
            order = []
            while ready:
                ci = ready.pop()
                order.append(ci)
                out = self.comb[ci][1]
                for nxt in self.consumers[out]:
                    indeg[nxt] -= self.comb[nxt][2].count(out)
                    if indeg[nxt] == 0:
                        ready.append(nxt)
            if len(order) != len(self.comb):
                stuck = [self.netlist.nets[self.comb[ci][1]] for ci, d in enumerate(indeg) if d > 0]
                self._topo_err = f"combinational cycle through {len(stuck)} nets, e.g. {stuck[:5]}"
            else:
                self._topo = order
        if self._topo_err:
            raise CycleError(self._topo_err)
        return self._topo

    @property
    def is_acyclic(self) -> bool:
        try:
            self.topo_order()
            return True
        except CycleError:
            return False


def compiled(n: Netlist) -> Compiled:
    c = n.__dict__.get("_compiled")
    if c is None:
        c = Compiled(n)
        n.__dict__["_compiled"] = c
    return c


def _eval(cell: tuple, vals: list[int], mask: int) -> int:
    op, _, ins, table, k = cell
    if op == 7:
        s = vals[ins[2]]
        return (vals[ins[0]] & ~s & mask) | (vals[ins[1]] & s)
    if op == 4:
        return vals[ins[0]] & vals[ins[1]]
    if op == 2:
        return vals[ins[0]]
    if op == 5:
        return vals[ins[0]] | vals[ins[1]]
    if op == 3:
        return ~vals[ins[0]] & mask
    if op == 6:
        return vals[ins[0]] ^ vals[ins[1]]
    if op == 0:
        return 0
    if op == 1:
        return mask
    return eval_lut(table, k, [vals[i] for i in ins], mask)


@dataclass
class LaneResult:
    values: list[int]         # per-net lane values, indexed like netlist.nets
    stable: int               # lane mask of stabilized lanes
    iterations: int
    compiled: Compiled

    def net(self, name: str) -> int:
        return self.values[self.compiled.index[name]]

    def outputs(self) -> dict[str, int]:
        idx = self.compiled.index
        return {p: self.values[idx[net]] for p, net in self.compiled.netlist.outputs}


def _seed_values(c: Compiled, inputs: Mapping[str, int], state: Mapping[str, int] | None,
                 mask: int, strict_inputs: bool,
                 state_lanes: Mapping[str, int] | None = None) -> list[int]:
    n = c.netlist
    vals = [0] * len(c.index)
    clocks = set(n.clocks)
    for name in n.inputs:
        if name in inputs:
            vals[c.index[name]] = inputs[name] & mask
        elif strict_inputs and name not in clocks:
            raise KeyError(f"no value for primary input {name!r}")
    for cell in c.dff_cells:
        if state_lanes is not None and cell.id in state_lanes:
            v = state_lanes[cell.id] & mask
        else:
            bit = state[cell.id] if state is not None and cell.id in state else cell.init
            v = mask if bit else 0
        vals[c.dff_out[cell.id]] = v
    return vals


def simulate_lanes(n: Netlist, inputs: Mapping[str, int], nlanes: int = 1,
                   mode: str = "fixed_point", state: Mapping[str, int] | None = None,
                   strict_inputs: bool = True, max_iter: int | None = None,
                   state_lanes: Mapping[str, int] | None = None) -> LaneResult:
    """Evaluate ``n`` on ``nlanes`` vectors at once.

    ``inputs`` maps each primary input to a lane int; ``state`` maps DFF cell
    ids to a scalar bit broadcast to all lanes, ``state_lanes`` to per-lane
    ints (default: the cell's ``init``).  Never raises on oscillation:
    unstable lanes are simply absent from ``stable``.
    """
    c = compiled(n)
    mask = (1 << nlanes) - 1
    vals = _seed_values(c, inputs, state, mask, strict_inputs, state_lanes)
    comb = c.comb
    if mode == "acyclic":
        for ci in c.topo_order():
            cell = comb[ci]
            vals[cell[1]] = _eval(cell, vals, mask)
        return LaneResult(vals, mask, 1, c)
    if mode != "fixed_point":
        raise ValueError(f"unknown simulation mode {mode!r}")

    limit = max_iter if max_iter is not None else len(c.index) + 1
    consumers = c.consumers
    dirty: Iterable[int] = range(len(comb))
    unstable = 0
    it = 0
    while it < limit:
        it += 1
        changes = []
        for ci in dirty:
            cell = comb[ci]
            new = _eval(cell, vals, mask)
            if new != vals[cell[1]]:
                changes.append((cell[1], new))
        if not changes:
            return LaneResult(vals, mask, it, c)
        nxt: set[int] = set()
        unstable = 0
        for out, new in changes:
            unstable |= vals[out] ^ new
            vals[out] = new
            nxt.update(consumers[out])
        dirty = nxt
    return LaneResult(vals, mask & ~unstable, it, c)


@dataclass
class SimResult:
    outputs: dict[str, int]
    stable: bool


def simulate(n: Netlist, vector: Mapping[str, int], mode: str = "acyclic",
             state: Mapping[str, int] | None = None, strict: bool = True) -> SimResult:
    """Simulate one input vector.  Raises OscillationError when ``strict`` and unstable."""
    res = simulate_lanes(n, vector, 1, mode, state)
    if strict and not res.stable:
        raise OscillationError(f"{n.name}: no fixed point within {res.iterations} iterations")
    return SimResult(res.outputs(), bool(res.stable))


def exhaustive_inputs(names: Sequence[str]) -> tuple[dict[str, int], int]:
    """Lane patterns enumerating all 2^len(names) vectors; lane v sets name i to bit i of v."""
    nlanes = 1 << len(names)
    out = {}
    for i, name in enumerate(names):
        block = 1 << i
        pat = ((1 << block) - 1) << block
        width = 2 * block
        while width < nlanes:
            pat |= pat << width
            width *= 2
        out[name] = pat
    return out, nlanes


def lane_bit(value: int, lane: int) -> int:
    return (value >> lane) & 1


def vectors_to_lanes(names: Sequence[str], vectors: Sequence[Mapping[str, int]]) -> dict[str, int]:
    out = {name: 0 for name in names}
    for lane, vec in enumerate(vectors):
        for name in names:
            if vec[name]:
                out[name] |= 1 << lane
    return out


@dataclass
class TraceStep:
    state: dict[str, int]
    outputs: dict[str, int] | None


def simulate_sequential(n: Netlist, clock: str, stimulus: Sequence[Mapping[str, int]],
                        state: Mapping[str, int] | None = None, outputs: bool = True,
                        mode: str = "fixed_point") -> list[TraceStep]:
    """Cycle-accurate simulation of the DFFs clocked by ``clock``.

    Each stimulus vector is applied, the combinational fan-in of those DFFs'
    data pins is settled, and the DFFs capture.  DFFs on other clocks hold.
    The returned trace has one entry per cycle holding the post-edge state of
    every DFF (keyed by cell id) and, when ``outputs`` is set, the pre-edge
    primary outputs.  With ``outputs=False`` only the data-pin cone is
    evaluated, which makes long scan shifts cheap.
    """
    c = compiled(n)
    cur = {cell.id: (state or {}).get(cell.id, cell.init) for cell in c.dff_cells}
    clocked = [cell for cell in c.dff_cells if cell.clock == clock]
    d_idx = [c.index[cell.inputs[0]] for cell in clocked]
    trace: list[TraceStep] = []
    if not stimulus:
        return trace

    use_cone = not outputs
    cone = _cone(c, d_idx) if use_cone else None
    for vec in stimulus:
        if not use_cone:
            res = simulate_lanes(n, vec, 1, mode, cur, strict_inputs=False)
            if not res.stable:
                raise OscillationError(f"{n.name}: unstable combinational logic during cycle")
            vals = res.values
            outs = res.outputs()
        else:
            vals = _eval_cone(c, cone, vec, cur)
            outs = None
        nxt = dict(cur)
        for cell, di in zip(clocked, d_idx):
            nxt[cell.id] = vals[di] & 1
        cur = nxt
        trace.append(TraceStep(dict(cur), outs))
    return trace


def _cone(c: Compiled, targets: Iterable[int]) -> list[int] | None:
    """Topologically ordered comb cells feeding ``targets``; None if the cone is cyclic."""
    driver = {cell[1]: ci for ci, cell in enumerate(c.comb)}
    cells: set[int] = set()
    seen: set[int] = set()
    stack = list(targets)
    while stack:
        net = stack.pop()
        if net in seen:
            continue
        seen.add(net)
        ci = driver.get(net)
        if ci is not None:
            cells.add(ci)
            stack.extend(c.comb[ci][2])
    indeg = {ci: sum(1 for i in c.comb[ci][2] if driver.get(i) in cells) for ci in cells}
    ready = sorted(ci for ci, d in indeg.items() if d == 0)
    order = []
    while ready:
        ci = ready.pop()
        order.append(ci)
        out = c.comb[ci][1]
        for nxt in c.consumers[out]:
            if nxt in cells:
                indeg[nxt] -= c.comb[nxt][2].count(out)
                if indeg[nxt] == 0:
                    ready.append(nxt)
    return order if len(order) == len(cells) else None


def _eval_cone(c: Compiled, cone: list[int] | None, vec: Mapping[str, int],
               state: Mapping[str, int]) -> list[int]:
    if cone is None:
        res = simulate_lanes(c.netlist, vec, 1, "fixed_point", state, strict_inputs=False)
        if not res.stable:
            raise OscillationError(f"{c.netlist.name}: unstable combinational logic during cycle")
        return res.values
    vals = _seed_values(c, vec, state, 1, strict_inputs=False)
    for ci in cone:
        cell = c.comb[ci]
        vals[cell[1]] = _eval(cell, vals, 1)
    return vals
