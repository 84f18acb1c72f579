"""Turn a fabric into a key-controlled netlist by walking its scan chain."""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..errors import BrokenChain
from ..fabric import BitInfo, Fabric
from ..netlist import Cell, Netlist

_CHAIN_BUFFERS = ("INPUT_BUF", "OUTPUT_BUF")


@dataclass(eq=False)
class KeyedNetlist:
    netlist: Netlist
    key_order: list[BitInfo]
    keys: list[str]              # key input nets, key i first
    inputs: list[str]            # functional (pad) inputs
    outputs: list[str]           # functional output ports
    scan_inputs: list[str]       # pseudo inputs from scanned user FFs
    scan_outputs: list[str]      # pseudo outputs feeding scanned user FFs

    @property
    def key_size(self) -> int:
        return len(self.keys)

    @property
    def all_inputs(self) -> list[str]:
        return self.inputs + self.scan_inputs

    @property
    def all_outputs(self) -> list[str]:
        return self.outputs + self.scan_outputs

    def with_netlist(self, n: Netlist) -> "KeyedNetlist":
        return replace(self, netlist=n)


def key_net(i: int) -> str:
    return f"key{i}"


def trace_scan_chain(n: Netlist, head: str = "scan_in_head", tail_port: str = "scan_out_tail",
                     clock: str = "prog_clk") -> tuple[list[Cell], list[Cell]]:
    """DFS from ``head`` to the net behind ``tail_port`` through DFF data pins and buffers.

    Returns (config DFFs in path order, chain buffers on the path).
    """
    try:
        tail = n.output_net(tail_port)
    except KeyError:
        raise BrokenChain(f"no {tail_port} port") from None
    if head not in n.inputs:
        raise BrokenChain(f"no {head} port")
    fanout = n.fanout
    parent: dict[str, tuple[str, Cell] | None] = {head: None}
    stack = [head]
    found = head == tail
    while stack and not found:
        net = stack.pop()
        succs = []
        for cell, pos in fanout.get(net, ()):
            if cell.kind == "DFF" and cell.clock == clock and pos == 0:
                succs.append(cell)
            elif cell.kind in _CHAIN_BUFFERS:
                succs.append(cell)
        # reversed so the first consumer is explored first
        for cell in reversed(succs):
            if cell.output not in parent:
                parent[cell.output] = (net, cell)
                if cell.output == tail:
                    found = True
                    break
                stack.append(cell.output)
    if not found:
        raise BrokenChain(f"{head} does not reach {tail_port}")
    path: list[Cell] = []
    net = tail
    while parent[net] is not None:
        prev, cell = parent[net]
        path.append(cell)
        net = prev
    path.reverse()
    dffs = [c for c in path if c.kind == "DFF"]
    bufs = [c for c in path if c.kind != "DFF"]
    on_path = {c.id for c in dffs}
    off = [c.id for c in n.dffs(clock) if c.id not in on_path]
    if off:
        raise BrokenChain(f"{len(off)} {clock} DFFs are off the chain, e.g. {off[:3]}")
    return dffs, bufs


def expose_keys(f: Fabric, scan_user_ffs: bool = True) -> KeyedNetlist:
    """Replace every configuration DFF with a primary key input, in scan order.

    User flip-flops are treated as fully scanned: each becomes a pseudo input
    (its output net) plus a pseudo output port ``ffd:<cell>`` on its data net.
    """
    n = f.netlist
    dffs, bufs = trace_scan_chain(n)
    bit_of_cell = {f"cfg{i}": i for i in range(f.num_bits)}
    rename: dict[str, str] = {}
    key_order: list[BitInfo] = []
    for i, c in enumerate(dffs):
        rename[c.output] = key_net(i)
        key_order.append(f.bit_map[bit_of_cell[c.id]] if c.id in bit_of_cell else
                         BitInfo(i, "LOGIC", (0, 0), c.id))
    drop = {c.id for c in dffs} | {c.id for c in bufs}
    # buffer outputs on the chain alias their input
    for c in bufs:
        rename[c.output] = rename.get(c.inputs[0], c.inputs[0])

    scan_in, scan_out_ports = [], []
    cells = []
    for c in n.cells:
        if c.id in drop:
            continue
        if c.kind == "DFF" and scan_user_ffs:
            scan_in.append(c.output)
            scan_out_ports.append((f"ffd:{c.id}", rename.get(c.inputs[0], c.inputs[0])))
            continue
        ins = tuple(rename.get(i, i) for i in c.inputs)
        cells.append(replace(c, inputs=ins) if ins != c.inputs else c)

    removed_inputs = {"scan_in_head", "prog_clk"}
    data_inputs = [i for i in n.inputs if i not in removed_inputs and i not in n.clocks]
    inputs = data_inputs + scan_in + [key_net(i) for i in range(len(dffs))]
    dropped_nets = {c.output for c in dffs} | {c.output for c in bufs} | removed_inputs
    nets = [x for x in n.nets if x not in dropped_nets and x not in n.clocks]
    nets += [key_net(i) for i in range(len(dffs))]
    out_ports = [(p, rename.get(net, net)) for p, net in n.outputs if p != "scan_out_tail"]
    outputs = out_ports + scan_out_ports
    kn = Netlist(n.name + "_keyed", tuple(cells), tuple(nets), tuple(inputs), tuple(outputs),
                 clocks=())
    return KeyedNetlist(kn, key_order, [key_net(i) for i in range(len(dffs))], data_inputs,
                        [p for p, _ in out_ports], scan_in, [p for p, _ in scan_out_ports])
