"""Key constraints that rule out combinational cycles.

A routing multiplexer only propagates the candidate its select code points
at, so for a given key the *active* dependency graph is a subgraph of the
netlist graph.  Bitstreams produced by a mapper never close a loop in that
graph.  Acyclicity is encoded with a binary rank per net inside each
strongly connected component: every possibly active edge ``u -> v``
requires ``rank(u) < rank(v)`` whenever it is active.
"""

from __future__ import annotations

from ..netlist import Netlist
from .loops import net_graph, strongly_connected, _nontrivial
from .tseitin import CircuitEncoder


def _less_than(enc: CircuitEncoder, a: list[int], b: list[int]) -> int:
    """Literal for unsigned a < b (bit lists LSB first)."""
    lt = enc.FALSE
    for ai, bi in zip(a, b):
        # this bit decides unless the bits are equal, then the lower bits do
        lt = enc.OR(enc.AND(-ai, bi), enc.AND(-enc.XOR(ai, bi), lt))
    return lt


def cyclic_components(n: Netlist) -> list[list[str]]:
    names, succ = net_graph(n)
    comps = strongly_connected(list(range(len(names))), succ)
    return [sorted(names[i] for i in c) for c in comps if _nontrivial(c, succ)]


def edge_activity(n: Netlist, key_lits: dict[str, int], enc: CircuitEncoder):
    """Yield (src net, dst net, activity literal) for every netlist edge.

    Multiplexers whose select is a key net have key-dependent activity; all
    other edges are treated as always active.
    """
    for c in n.cells:
        if c.kind == "DFF":
            continue
        if c.kind == "MUX2" and c.inputs[2] in key_lits:
            s = key_lits[c.inputs[2]]
            a, b, _ = c.inputs
            if a == b:
                yield a, c.output, enc.TRUE
            else:
                yield a, c.output, -s
                yield b, c.output, s
            continue
        for i in c.inputs:
            yield i, c.output, enc.TRUE


def add_acyclicity(enc: CircuitEncoder, n: Netlist, key_lits: dict[str, int],
                   comps: list[list[str]] | None = None) -> int:
    """Constrain ``key_lits`` (key net -> literal) to keys with an acyclic
    active graph.  Returns the number of constrained edges; a structurally
    unavoidable cycle raises ValueError."""
    comps = cyclic_components(n) if comps is None else comps
    comp_of: dict[str, int] = {}
    for ci, comp in enumerate(comps):
        for net in comp:
            comp_of[net] = ci
    rank: dict[str, list[int]] = {}
    for comp in comps:
        bits = max(1, (len(comp) - 1).bit_length())
        for net in comp:
            rank[net] = [enc.new_var() for _ in range(bits)]
    count = 0
    for u, v, act in edge_activity(n, key_lits, enc):
        cu = comp_of.get(u)
        if cu is None or cu != comp_of.get(v) or act == enc.FALSE:
            continue
        if u == v:
            ok = enc.assert_lit(-act)
        else:
            ok = enc.assert_lit(enc.OR(-act, _less_than(enc, rank[u], rank[v])))
        if not ok:
            raise ValueError(f"unavoidable combinational cycle through {u}")
        count += 1
    return count
