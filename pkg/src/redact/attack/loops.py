"""Combinational-loop breaking: feedback-net selection and frame unrolling."""

from __future__ import annotations

import time
from dataclasses import dataclass
from itertools import combinations

from ..errors import AttackTimeout
from ..netlist import Cell, Netlist
from .keys import KeyedNetlist


@dataclass(frozen=True)
class FeedbackSet:
    nets: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.nets)

    def __iter__(self):
        return iter(self.nets)


def net_graph(n: Netlist) -> tuple[list[str], list[list[int]]]:
    """Net-level dependency graph of the combinational cells (DFFs cut)."""
    names = list(n.nets)
    idx = {x: i for i, x in enumerate(names)}
    succ: list[set[int]] = [set() for _ in names]
    for c in n.cells:
        if c.kind == "DFF":
            continue
        o = idx[c.output]
        for i in c.inputs:
            succ[idx[i]].add(o)
    return names, [sorted(s) for s in succ]


def strongly_connected(nodes: list[int], succ: list[list[int]], alive: set[int] | None = None
                       ) -> list[list[int]]:
    """Iterative Tarjan restricted to ``alive`` (default: ``nodes``)."""
    alive = set(nodes) if alive is None else alive
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    out: list[list[int]] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, pos = work[-1]
            nbrs = succ[v]
            while pos < len(nbrs):
                w = nbrs[pos]
                pos += 1
                if w not in alive:
                    continue
                if w not in index:
                    work[-1] = (v, pos)
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, 0))
                    break
                if w in on_stack and index[w] < low[v]:
                    low[v] = index[w]
            else:
                work.pop()
                if work:
                    u = work[-1][0]
                    if low[v] < low[u]:
                        low[u] = low[v]
                if low[v] == index[v]:
                    comp = []
                    while True:
                        w = stack.pop()
                        on_stack.discard(w)
                        comp.append(w)
                        if w == v:
                            break
                    out.append(comp)
    return out


def _nontrivial(comp: list[int], succ: list[list[int]]) -> bool:
    return len(comp) > 1 or comp[0] in succ[comp[0]]


def find_feedback_set(kn: KeyedNetlist | Netlist, deadline: float | None = None) -> FeedbackSet:
    """Greedy feedback-net selection.

    Repeatedly takes the strongly connected components of the remaining
    graph and removes, from each non-trivial one, the net with the largest
    in-component fan-in x fan-out product (ties: earliest declared net).
    """
    n = kn.netlist if isinstance(kn, KeyedNetlist) else kn
    names, succ = net_graph(n)
    pred: list[list[int]] = [[] for _ in names]
    for u, vs in enumerate(succ):
        for v in vs:
            pred[v].append(u)
    removed: list[int] = []
    work = [c for c in strongly_connected(list(range(len(names))), succ) if _nontrivial(c, succ)]
    while work:
        if deadline is not None and time.monotonic() > deadline:
            raise AttackTimeout("feedback-set search exceeded the time budget")
        comp = work.pop()
        members = set(comp)
        best, best_score = -1, -1
        for v in sorted(comp):
            fi = sum(1 for u in pred[v] if u in members)
            fo = sum(1 for w in succ[v] if w in members)
            score = fi * fo
            if score > best_score:
                best, best_score = v, score
        removed.append(best)
        members.discard(best)
        if members:
            rest = sorted(members)
            for c in strongly_connected(rest, succ, members):
                if _nontrivial(c, succ):
                    work.append(c)
    return FeedbackSet(tuple(names[i] for i in sorted(removed)))


def is_acyclic_without(n: Netlist, cut: set[str] | frozenset[str]) -> bool:
    """Kahn's check on the net graph with edges out of ``cut`` nets removed."""
    names, succ = net_graph(n)
    idx = {x: i for i, x in enumerate(names)}
    cut_i = {idx[x] for x in cut}
    indeg = [0] * len(names)
    for u, vs in enumerate(succ):
        if u in cut_i:
            continue
        for v in vs:
            indeg[v] += 1
    ready = [v for v, d in enumerate(indeg) if d == 0]
    seen = 0
    while ready:
        u = ready.pop()
        seen += 1
        if u in cut_i:
            continue
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
    return seen == len(names)


def min_feedback_set_bruteforce(n: Netlist, nets: list[str] | None = None) -> tuple[str, ...]:
    """Exhaustive minimum feedback-net set (small graphs only)."""
    names, succ = net_graph(n)
    comps = [c for c in strongly_connected(list(range(len(names))), succ) if _nontrivial(c, succ)]
    candidates = sorted({names[v] for c in comps for v in c}) if nets is None else list(nets)
    if len(candidates) > 20:
        raise ValueError("brute force limited to 20 candidate nets")
    for size in range(len(candidates) + 1):
        for combo in combinations(candidates, size):
            if is_acyclic_without(n, set(combo)):
                return combo
    raise AssertionError("no feedback set found")


# --------------------------------------------------------------------------
# unrolling

def frame_net(net: str, j: int) -> str:
    return f"{net}@{j}"


def init_net(net: str) -> str:
    return f"{net}@init"


STABLE_PORT = "stable"


@dataclass(eq=False)
class Unrolled:
    """An acyclic keyed netlist plus bookkeeping about how it was unrolled."""

    keyed: KeyedNetlist
    cut: tuple[str, ...]
    frames: int
    frame0: str
    stabilize: bool
    pseudo_inputs: list[str]

    @property
    def netlist(self) -> Netlist:
        return self.keyed.netlist

    @property
    def unroll_factor(self) -> int:
        return len(self.cut)


def unroll(kn: KeyedNetlist, fs: FeedbackSet, frame0: str = "free", stabilize: bool = True,
           deadline: float | None = None, max_cells: int | None = None,
           frames: int | None = None) -> Unrolled:
    """Replicate the cut-dependent core into ``|fs| + 1`` frames.

    Frame 0 reads cut nets from fresh pseudo-inputs (``frame0="free"``) or
    from constant 0 (``frame0="zero"``, the simulator's reset state); frame
    ``j`` reads the values frame ``j-1`` computed.  Logic that does not depend
    on a cut net is shared by all frames rather than copied.  Outputs come
    from the last frame.  With ``stabilize`` an extra output port ``stable``
    is 1 iff the last two frames agree on every cut net.  ``frames``
    overrides the frame count; since the stability output compares two
    consecutive frames, a true output still certifies a fixed point.
    """
    if frame0 not in ("free", "zero"):
        raise ValueError("frame0 must be 'free' or 'zero'")
    n = kn.netlist
    cut = tuple(fs.nets)
    if not cut:
        return Unrolled(kn, cut, 1, frame0, False, [])
    U = len(cut) if frames is None else frames - 1
    if U < 1 and stabilize:
        raise ValueError("stabilization needs at least two frames")

    cutset = set(cut)
    # cells whose value (transitively) depends on a cut net must be copied
    dependent: set[str] = set(cutset)
    fanout = n.fanout
    stack = list(cut)
    while stack:
        net = stack.pop()
        for cell, _ in fanout.get(net, ()):
            if cell.kind != "DFF" and cell.output not in dependent:
                dependent.add(cell.output)
                stack.append(cell.output)
    order = _topo_cells(n, cutset)
    dep_cells = [c for c in order if c.output in dependent]
    shared = [c for c in order if c.output not in dependent]
    if max_cells is not None and len(shared) + (U + 1) * len(dep_cells) > max_cells:
        raise AttackTimeout(f"unrolled netlist would exceed {max_cells} cells")

    cells: list[Cell] = list(shared) + [c for c in n.cells if c.kind == "DFF"]
    nets = [x for x in n.nets if x not in dependent]
    inputs = list(n.inputs)
    pseudo: list[str] = []
    if frame0 == "free":
        for c in cut:
            pseudo.append(init_net(c))
        inputs += pseudo
        nets += pseudo
    else:
        nets.append("unroll_const0")
        cells.append(Cell("unroll_const0", "CONST0", (), "unroll_const0"))

    def source(net: str, j: int) -> str:
        if net in cutset:
            if j == 0:
                return init_net(net) if frame0 == "free" else "unroll_const0"
            return frame_net(net, j - 1)
        if net in dependent:
            return frame_net(net, j)
        return net

    for j in range(U + 1):
        if deadline is not None and time.monotonic() > deadline:
            raise AttackTimeout("unrolling exceeded the time budget")
        for c in dep_cells:
            out = frame_net(c.output, j)
            cells.append(Cell(f"{c.id}@{j}", c.kind, tuple(source(i, j) for i in c.inputs),
                              out, c.k, c.table, c.clock, c.init))
            nets.append(out)

    def final(net: str) -> str:
        return frame_net(net, U) if net in dependent else net

    outputs = [(p, final(net)) for p, net in n.outputs]
    if stabilize:
        diffs = []
        for c in cut:
            d = f"stab_diff_{c}"
            cells.append(Cell(d, "XOR2", (frame_net(c, U), frame_net(c, U - 1)), d))
            nets.append(d)
            diffs.append(d)
        acc = diffs[0]
        for i, d in enumerate(diffs[1:]):
            o = f"stab_or_{i}"
            cells.append(Cell(o, "OR2", (acc, d), o))
            nets.append(o)
            acc = o
        cells.append(Cell("stab_out", "NOT", (acc,), "stab_out"))
        nets.append("stab_out")
        outputs.append((STABLE_PORT, "stab_out"))
    un = Netlist(n.name + f"_unrolled{len(cut)}", tuple(cells), tuple(nets), tuple(inputs),
                 tuple(outputs), clocks=())
    return Unrolled(kn.with_netlist(un), cut, U + 1, frame0, stabilize, pseudo)


def _topo_cells(n: Netlist, cut: set[str]) -> list[Cell]:
    """Comb cells in an order where every non-cut input is produced earlier."""
    driver = {c.output: c for c in n.cells if c.kind != "DFF"}
    indeg: dict[str, int] = {}
    users: dict[str, list[Cell]] = {}
    for c in driver.values():
        cnt = 0
        for i in c.inputs:
            if i in driver and i not in cut:
                cnt += 1
                users.setdefault(i, []).append(c)
        indeg[c.id] = cnt
    ready = [c for c in n.cells if c.kind != "DFF" and indeg[c.id] == 0]
    ready.reverse()
    order = []
    while ready:
        c = ready.pop()
        order.append(c)
        for u in users.get(c.output, ()):
            indeg[u.id] -= 1
            if indeg[u.id] == 0:
                ready.append(u)
    if len(order) != len(driver):
        raise ValueError("feedback set does not break every combinational cycle")
    return order
