"""Bitstream emission from a placed and routed design."""

from __future__ import annotations

from ..fabric import Bitstream, Element, Fabric, ipin_node, opin_node
from .pack import Placement
from .route import RoutingResult


def _set_code(bits: list[int], e: Element, code: int) -> None:
    if code >= 1 << len(e.bits):
        raise AssertionError(f"code {code} does not fit {e.name}")
    for j, idx in enumerate(e.bits):
        bits[idx] = (code >> j) & 1


def expand_table(table: int, k: int, K: int) -> int:
    """Replicate a k-input table over K inputs (upper inputs are don't-cares)."""
    mask = (1 << (1 << k)) - 1 if k else 1
    out = 0
    for r in range(1 << K):
        row = r & ((1 << k) - 1)
        out |= ((table & mask) >> row & 1) << r
    return out


def emit_bitstream(p: Placement, r: RoutingResult, f: Fabric) -> Bitstream:
    """Set every used selector, LUT table, bypass and pad bit; all else stays 0."""
    arch = f.arch
    prm = f.params
    els = arch.elements
    bits = [0] * f.num_bits
    n = p.design.lut_netlist
    cells = {c.id: c for c in n.cells}

    for nr in r.nets.values():
        for node, par in nr.parent.items():
            e = arch.node_driver[node]
            _set_code(bits, e, e.candidates.index(par))

    for port, direction in p.port_dir.items():
        if direction == "out":
            x, y, k = p.pad_of[port]
            bits[els[f"io_{x}_{y}.pad{k}.dir"].bits[0]] = 1

    produced = {}
    for name, b in p.bles.items():
        x, y = p.clb_of[name]
        produced[(x, y, b.out)] = opin_node(x, y, p.slot_of[name])
    for name, b in p.bles.items():
        x, y = p.clb_of[name]
        l = p.slot_of[name]
        for j in range(prm.K):
            e = els[f"clb_{x}_{y}.ble{l}.xbar{j}"]
            if j >= len(b.inputs):
                code = 0
            else:
                net = b.inputs[j]
                src = produced.get((x, y, net)) or r.ipin_for(net, (x, y))
                if src is None:
                    raise AssertionError(f"{net} does not reach CLB {(x, y)}")
                code = e.candidates.index(src)
            _set_code(bits, e, code)
        lut = cells[b.lut]
        table = expand_table(lut.table, lut.k, prm.K)
        e = els[f"clb_{x}_{y}.ble{l}.lut"]
        for rr, idx in enumerate(e.bits):
            bits[idx] = (table >> rr) & 1
        if b.uses_ff:
            bits[els[f"clb_{x}_{y}.ble{l}.ff"].bits[0]] = 1
    return Bitstream(tuple(bits), f.fingerprint())


def pin_map(p: Placement) -> dict[str, str]:
    """Design port -> fabric port."""
    from ..fabric import pad_in_port, pad_out_port
    out = {}
    for port, pad in sorted(p.pad_of.items()):
        out[port] = pad_in_port(*pad) if p.port_dir[port] == "in" else pad_out_port(*pad)
    return out


__all__ = ["emit_bitstream", "expand_table", "pin_map", "ipin_node"]
