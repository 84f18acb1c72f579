"""Technology mapping onto K-input LUTs by greedy cone collapsing."""

from __future__ import annotations

import random
from dataclasses import dataclass

from ..errors import RedactError
from ..netlist import Cell, Netlist, NetlistBuilder, sweep_dead
from ..sim import compiled, exhaustive_inputs, simulate_lanes

GATES = ("INPUT_BUF", "OUTPUT_BUF", "NOT", "AND2", "OR2", "XOR2", "MUX2", "CONST0", "CONST1")
BUF_TABLE = 0b10


@dataclass(eq=False)
class MappedDesign:
    lut_netlist: Netlist
    K: int
    source: Netlist | None = None

    @property
    def io_signature(self) -> tuple[int, int]:
        n = self.lut_netlist
        return len(n.data_inputs), len(n.outputs)

    @property
    def luts(self) -> list[Cell]:
        return [c for c in self.lut_netlist.cells if c.kind == "LUT"]

    @property
    def dffs(self) -> list[Cell]:
        return self.lut_netlist.dffs()

    @property
    def num_pins(self) -> int:
        return sum(self.io_signature)


def reduce_support(ins: tuple[str, ...], table: int) -> tuple[tuple[str, ...], int]:
    """Drop LUT inputs the table does not depend on."""
    ins = tuple(ins)
    j = 0
    while j < len(ins):
        k = len(ins)
        lo = hi = 0
        r = 0
        for row in range(1 << k):
            if (row >> j) & 1:
                continue
            lo |= ((table >> row) & 1) << r
            hi |= ((table >> (row | 1 << j)) & 1) << r
            r += 1
        if lo == hi:
            ins = ins[:j] + ins[j + 1:]
            table = lo
        else:
            j += 1
    return ins, table


def _decompose(n: Netlist, K: int) -> Netlist:
    """Shannon-split LUTs wider than K; turn MUX2 into AND/OR/NOT when K < 3."""
    b = NetlistBuilder(n.name, n.clocks)
    for i in n.inputs:
        b.add_input(i)
    for net in n.nets:
        b.net(net)

    def mux(a: str, hi: str, s: str, out: str | None = None) -> str:
        if K >= 3:
            return b.mux(a, hi, s, output=out)
        ns = b.gate("NOT", s)
        return b.gate("OR2", b.gate("AND2", a, ns), b.gate("AND2", hi, s), output=out)

    def lut(ins: tuple[str, ...], table: int, out: str | None = None) -> str:
        ins, table = reduce_support(ins, table)
        k = len(ins)
        if k == 0 and out is None:
            return b.const(table & 1)
        if k <= K:
            return b.lut(ins, table, output=out)
        half = 1 << (k - 1)
        lo = table & ((1 << half) - 1)
        hi = table >> half
        return mux(lut(ins[:-1], lo), lut(ins[:-1], hi), ins[-1], out)

    for c in n.cells:
        if c.kind == "LUT" and c.k > K:
            lut(c.inputs, c.table, c.output)
        elif c.kind == "MUX2" and K < 3:
            mux(*c.inputs, out=c.output)
        else:
            b.cells.append(c)
    for port, net in n.outputs:
        b.add_output(port, net)
    return b.build()


def _cone_table(root: Cell, leaves: list[str], cell_of: dict[str, Cell]) -> int:
    """Truth table of the cone rooted at ``root`` over ``leaves``."""
    names = list(leaves)
    lanes, nl = exhaustive_inputs(names) if names else ({}, 1)
    mask = (1 << nl) - 1
    val: dict[str, int] = dict(lanes)

    def ev(net: str) -> int:
        if net in val:
            return val[net]
        c = cell_of[net]
        ins = [ev(i) for i in c.inputs]
        k = c.kind
        if k == "CONST0":
            r = 0
        elif k == "CONST1":
            r = mask
        elif k in ("INPUT_BUF", "OUTPUT_BUF"):
            r = ins[0]
        elif k == "NOT":
            r = ~ins[0] & mask
        elif k == "AND2":
            r = ins[0] & ins[1]
        elif k == "OR2":
            r = ins[0] | ins[1]
        elif k == "XOR2":
            r = ins[0] ^ ins[1]
        elif k == "MUX2":
            a, bb, s = ins
            r = (a & ~s | bb & s) & mask
        else:
            raise AssertionError(k)
        val[net] = r
        return r

    out = ev(root.output)
    return out & mask


def tech_map(n: Netlist, K: int, verify: bool = True) -> MappedDesign:
    """Map ``n`` onto LUTs with at most ``K`` inputs.

    Gates are absorbed greedily in topological order into the cone of their
    single consumer as long as the cone's support stays within ``K``; nets
    with several consumers, outputs and DFF inputs become LUT roots.  LUTs
    already present (with at most ``K`` inputs) are kept as they are.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    d = _decompose(n, K)
    c = compiled(d)
    comb = [x for x in d.cells if x.kind != "DFF"]
    order = [comb[i] for i in c.topo_order()]
    fanout = d.fanout
    po = d.output_nets
    cell_of = {x.output: x for x in comb}
    decl = {net: i for i, net in enumerate(d.nets)}

    absorbable: dict[str, bool] = {}
    support: dict[str, frozenset[str]] = {}
    roots: set[str] = set()

    def leaf_set(net: str) -> frozenset[str]:
        if absorbable.get(net):
            return support[net]
        drv = cell_of.get(net)
        if drv is not None and drv.kind in ("CONST0", "CONST1"):
            return frozenset()
        return frozenset((net,))

    for cell in order:
        out = cell.output
        if cell.kind not in GATES:
            if cell.kind != "LUT":
                raise RedactError(f"cannot map cell kind {cell.kind}")
            roots.add(out)
            absorbable[out] = False
            continue
        fan = fanout.get(out, [])
        single = len(fan) == 1 and out not in po and fan[0][0].kind in GATES
        ins = list(cell.inputs)
        while True:
            sup = frozenset().union(*(leaf_set(i) for i in ins)) if ins else frozenset()
            if len(sup) <= K:
                break
            # materialise the widest absorbed fan-in
            cand = [i for i in ins if absorbable.get(i)]
            widest = max(cand, key=lambda i: (len(support[i]), -decl[i]))
            absorbable[widest] = False
            roots.add(widest)
        support[out] = sup
        if cell.kind in ("CONST0", "CONST1") and not (out in po or any(
                f[0].kind not in GATES for f in fan)):
            absorbable[out] = True       # constants fold into every consumer
            continue
        absorbable[out] = single
        if not single:
            roots.add(out)

    b = NetlistBuilder(n.name + "_mapped", n.clocks)
    for i in n.inputs:
        b.add_input(i)
    for cell in order:
        if cell.output not in roots:
            continue
        if cell.kind == "LUT":
            b.add_cell("LUT", cell.inputs, cell.output, cell.id, k=cell.k, table=cell.table)
            continue
        leaves = sorted(support[cell.output], key=decl.__getitem__)
        table = _cone_table(cell, leaves, {k: v for k, v in cell_of.items()
                                           if k == cell.output or absorbable.get(k)})
        b.add_cell("LUT", leaves, cell.output, cell.output, k=len(leaves), table=table)
    for x in d.cells:
        if x.kind == "DFF":
            b.add_cell("DFF", x.inputs, x.output, x.id, clock=x.clock, init=x.init)
    for port, net in n.outputs:
        b.add_output(port, net)
    mapped = _prepare_registers(sweep_dead(b.build()))
    md = MappedDesign(mapped, K, n)
    if verify:
        ok, how = equivalent(n, mapped)
        if not ok:
            raise RedactError(f"technology mapping changed the function ({how})")
    return md


def _prepare_registers(n: Netlist) -> Netlist:
    """Give every DFF a private driving LUT so the pair fits one logic element."""
    fan = n.fanout
    drv = n.driver
    po = n.output_nets
    cells = list(n.cells)
    nets = list(n.nets)
    extra: list[Cell] = []
    for i, c in enumerate(cells):
        if c.kind != "DFF":
            continue
        d = c.inputs[0]
        src = drv.get(d)
        private = (src is not None and src.kind == "LUT" and len(fan.get(d, ())) == 1
                   and d not in po)
        if private:
            continue
        buf = f"{c.id}$d"
        nets.append(buf)
        extra.append(Cell(buf, "LUT", (d,), buf, k=1, table=BUF_TABLE))
        cells[i] = Cell(c.id, "DFF", (buf,), c.output, clock=c.clock, init=c.init)
    if not extra:
        return n
    # keep LUTs before DFFs for readability
    out = [x for x in cells if x.kind != "DFF"] + extra + [x for x in cells if x.kind == "DFF"]
    return n.replace(cells=tuple(out), nets=tuple(nets))


def equivalent(a: Netlist, b: Netlist, limit: int = 12, samples: int = 10000,
               seed: int = 0) -> tuple[bool, str]:
    """Combinational equivalence with DFF outputs as shared pseudo inputs
    (matched by DFF cell id) and DFF data nets as extra outputs."""
    da = {c.id: c for c in a.dffs()}
    db = {c.id: c for c in b.dffs()}
    if set(da) != set(db):
        return False, "different register sets"
    names = list(a.data_inputs)
    if set(names) != set(b.data_inputs):
        return False, "different inputs"
    regs = sorted(da)
    total = len(names) + len(regs)
    if total <= limit:
        lanes, nl = exhaustive_inputs(names + [f"$ff:{r}" for r in regs])
        how = "exhaustive"
    else:
        nl = samples
        rng = random.Random(seed)
        lanes = {x: rng.getrandbits(nl) for x in names + [f"$ff:{r}" for r in regs]}
        how = f"{samples} random vectors"
    ins = {x: lanes[x] for x in names}
    state = {r: lanes[f"$ff:{r}"] for r in regs}
    ra = simulate_lanes(a, ins, nl, "acyclic", state_lanes=state)
    rb = simulate_lanes(b, ins, nl, "acyclic", state_lanes=state)
    oa, ob = ra.outputs(), rb.outputs()
    if set(oa) != set(ob):
        return False, "different outputs"
    for p in oa:
        if oa[p] != ob[p]:
            return False, f"output {p} differs ({how})"
    for r in regs:
        if ra.net(da[r].inputs[0]) != rb.net(db[r].inputs[0]):
            return False, f"next state of {r} differs ({how})"
    return True, how
