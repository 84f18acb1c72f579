"""Maze routing over the fabric's routing-resource graph."""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field

from ..errors import Unroutable
from ..fabric import CONST0, Fabric, ipin_node, opin_node, pad_sig_node
from .pack import Placement

MAX_ITERATIONS = 50
HISTORY_STEP = 1.0


@dataclass
class NetRoute:
    """Routing tree of one logical net."""

    net: str
    source: str
    parent: dict[str, str] = field(default_factory=dict)   # node -> driving node
    targets: dict[str, str] = field(default_factory=dict)  # sink key -> reached node

    @property
    def nodes(self) -> list[str]:
        return list(self.parent)


@dataclass
class RoutingResult:
    nets: dict[str, NetRoute]
    iterations: int = 0
    congestion: dict[str, float] = field(default_factory=dict)

    def ipin_for(self, net: str, clb: tuple[int, int]) -> str | None:
        r = self.nets.get(net)
        return None if r is None else r.targets.get(f"clb:{clb[0]},{clb[1]}")

    def used_nodes(self) -> dict[str, str]:
        out = {}
        for r in self.nets.values():
            for node in r.parent:
                out[node] = r.net
        return out


class RouteGraph:
    """Successor lists derived from the architecture's candidate lists."""

    def __init__(self, f: Fabric):
        self.arch = f.arch
        self.succ: dict[str, list[str]] = {}
        self.pred_code: dict[str, dict[str, int]] = {}
        for e in self.arch.scan_elements:
            if e.kind not in ("track", "ipin", "opad"):
                continue
            codes = {}
            for code, cand in enumerate(e.candidates):
                if cand == CONST0:
                    continue
                codes[cand] = code
                self.succ.setdefault(cand, []).append(e.node)
            self.pred_code[e.node] = codes


def _net_sinks(p: Placement) -> dict[str, tuple[str, list[tuple[str, set[str]]]]]:
    """net -> (source node, [(sink key, acceptable target nodes)])."""
    f = p.fabric
    prm = f.params
    n = p.design.lut_netlist
    src: dict[str, str] = {}
    for name, b in p.bles.items():
        x, y = p.clb_of[name]
        src[b.out] = opin_node(x, y, p.slot_of[name])
    for i in n.data_inputs:
        src[i] = pad_sig_node(*p.pad_of[i])
    sinks: dict[str, list[tuple[str, set[str]]]] = {}
    for name, b in p.bles.items():
        clb = p.clb_of[name]
        for i in b.inputs:
            if src[i].startswith(f"clb_{clb[0]}_{clb[1]}_out"):
                continue            # same CLB: reached through the crossbar
            key = f"clb:{clb[0]},{clb[1]}"
            lst = sinks.setdefault(i, [])
            if all(k != key for k, _ in lst):
                lst.append((key, {ipin_node(clb[0], clb[1], q) for q in range(prm.I)}))
    for port, net in n.outputs:
        x, y, k = p.pad_of[port]
        sinks.setdefault(net, []).append((f"pad:{port}", {f"pad_{x}_{y}_{k}_o"}))
    return {net: (src[net], sorted(s, key=lambda t: t[0])) for net, s in sinks.items()}


def _route_net(g: RouteGraph, net: str, source: str, sinks, busy: dict[str, str],
               hist: dict[str, float]) -> NetRoute | None:
    r = NetRoute(net, source)
    tree = {source}
    for key, targets in sinks:
        free = {t for t in targets if busy.get(t) in (None, net)}
        hit = next((t for t in sorted(free) if t in tree), None)
        if hit is not None:
            r.targets[key] = hit
            continue
        dist = {v: 0.0 for v in tree}
        prev: dict[str, str] = {}
        heap = [(0.0, v) for v in sorted(tree)]
        heapq.heapify(heap)
        found = None
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist.get(u, float("inf")):
                continue
            if u in free and u not in tree:
                found = u
                break
            if u not in tree and u in targets:
                continue
            for v in g.succ.get(u, ()):
                if v in tree or busy.get(v) not in (None, net):
                    continue
                nd = d + 1.0 + hist.get(v, 0.0)
                if nd < dist.get(v, float("inf")):
                    dist[v] = nd
                    prev[v] = u
                    heapq.heappush(heap, (nd, v))
        if found is None:
            return None
        v = found
        while v not in tree:
            u = prev[v]
            r.parent[v] = u
            tree.add(v)
            v = u
        r.targets[key] = found
    return r


def route(p: Placement, f: Fabric, seed: int = 0,
          max_iterations: int = MAX_ITERATIONS) -> RoutingResult:
    """Route every net of the placement; rip up and retry on failure.

    Nets are routed one at a time on hard-exclusive resources.  When some
    net fails, all routes are torn up, the resources of the failing attempt
    gain history cost and the failed nets move to the front of the order.
    """
    g = RouteGraph(f)
    work = _net_sinks(p)
    order = sorted(work)
    rng = random.Random(seed)
    hist: dict[str, float] = {}
    for it in range(1, max_iterations + 1):
        busy: dict[str, str] = {}
        done: dict[str, NetRoute] = {}
        failed = []
        for net in order:
            source, sinks = work[net]
            r = _route_net(g, net, source, sinks, busy, hist)
            if r is None:
                failed.append(net)
                continue
            for node in r.parent:
                busy[node] = net
            done[net] = r
        if not failed:
            res = RoutingResult(done, it, hist)
            check_routing(res, p, f)
            return res
        for node in busy:
            hist[node] = hist.get(node, 0.0) + HISTORY_STEP
        rest = [n for n in order if n not in failed]
        rng.shuffle(rest)
        order = failed + rest
    raise Unroutable(f"routing failed after {max_iterations} iterations "
                     f"({len(failed)} nets unrouted)", congestion=dict(hist))


def check_routing(r: RoutingResult, p: Placement, f: Fabric) -> None:
    """Exclusivity, legality and connectivity of every routing tree."""
    g = RouteGraph(f)
    owner: dict[str, str] = {}
    work = _net_sinks(p)
    if set(work) != set(r.nets):
        raise AssertionError("routed net set differs from the placement's nets")
    for net, nr in r.nets.items():
        src, sinks = work[net]
        if nr.source != src:
            raise AssertionError(f"net {net} routed from the wrong source")
        for node, par in nr.parent.items():
            if node in owner:
                raise AssertionError(f"{node} used by {owner[node]} and {net}")
            owner[node] = net
            if par not in g.pred_code.get(node, {}):
                raise AssertionError(f"illegal edge {par} -> {node}")
            v, steps = node, 0
            while v != src:
                v = nr.parent.get(v)
                steps += 1
                if v is None or steps > len(nr.parent) + 1:
                    raise AssertionError(f"net {net}: {node} not connected to the source")
        for key, targets in sinks:
            t = nr.targets.get(key)
            if t is None or t not in targets or (t not in nr.parent and t != src):
                raise AssertionError(f"net {net}: sink {key} not reached")
