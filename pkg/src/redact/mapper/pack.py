"""Packing logic elements into CLBs and annealing-based placement."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from ..errors import CapacityExceeded
from ..fabric import Fabric
from .techmap import MappedDesign

# annealing schedule
SA_ALPHA = 0.9
SA_MOVES_PER_OBJECT = 20
SA_MIN_TEMP = 0.005
SA_MAX_ROUNDS = 200


@dataclass(frozen=True)
class Ble:
    """A LUT, optionally with the register it feeds."""

    name: str          # LUT output net
    lut: str           # LUT cell id
    inputs: tuple[str, ...]
    dff: str | None = None        # DFF cell id
    out: str = ""                 # net visible outside the BLE

    @property
    def uses_ff(self) -> bool:
        return self.dff is not None


@dataclass
class Placement:
    design: MappedDesign
    fabric: Fabric
    bles: dict[str, Ble]
    clb_of: dict[str, tuple[int, int]]            # BLE name -> CLB tile
    slot_of: dict[str, int]                       # BLE name -> LUT slot
    pad_of: dict[str, tuple[int, int, int]]       # port -> pad
    port_dir: dict[str, str] = field(default_factory=dict)   # port -> "in"/"out"
    cost: float = 0.0

    def pad_nets(self) -> dict[str, str]:
        """Port name -> design net."""
        n = self.design.lut_netlist
        out = {i: i for i in n.data_inputs}
        out.update(dict(n.outputs))
        return out

    def ble_at(self) -> dict[tuple[int, int, int], str]:
        return {(*self.clb_of[b], self.slot_of[b]): b for b in self.bles}

    def check(self) -> None:
        seen = set()
        for b in self.bles:
            k = (*self.clb_of[b], self.slot_of[b])
            if k in seen:
                raise AssertionError(f"slot {k} used twice")
            seen.add(k)
        pads = list(self.pad_of.values())
        if len(pads) != len(set(pads)):
            raise AssertionError("pad used twice")


def build_bles(d: MappedDesign) -> dict[str, Ble]:
    n = d.lut_netlist
    dff_of = {c.inputs[0]: c for c in n.dffs()}
    bles = {}
    for c in d.luts:
        ff = dff_of.get(c.output)
        bles[c.output] = Ble(c.output, c.id, c.inputs, ff.id if ff else None,
                             ff.output if ff else c.output)
    return bles


def check_capacity(d: MappedDesign, f: Fabric) -> None:
    p = f.params
    n_in, n_out = d.io_signature
    pins = n_in + n_out
    if pins > p.total_pads:
        raise CapacityExceeded("IO", pins, p.total_pads)
    luts = len(d.luts)
    if luts > p.W * p.W * p.N:
        raise CapacityExceeded("LUT", luts, p.W * p.W * p.N)
    dffs = len(d.dffs)
    if dffs and not p.ff_bypass:
        raise CapacityExceeded("DFF", dffs, 0)
    if dffs > p.W * p.W * p.N:
        raise CapacityExceeded("DFF", dffs, p.W * p.W * p.N)
    if any(len(c.inputs) > p.K for c in d.luts):
        raise CapacityExceeded("LUT inputs", max(len(c.inputs) for c in d.luts), p.K)


def _cluster_inputs(members: list[Ble], produced: set[str]) -> set[str]:
    ins = set()
    for b in members:
        ins.update(i for i in b.inputs if i not in produced)
    return ins


def pack(bles: dict[str, Ble], N: int, I: int) -> list[list[str]]:
    """Greedy affinity clustering: seed with the lowest unpacked name, then add
    the BLE sharing most nets with the cluster (ties: lowest name) while the
    cluster's distinct external inputs fit in ``I`` pins."""
    left = sorted(bles)
    clusters: list[list[str]] = []
    while left:
        cur = [left.pop(0)]
        while len(cur) < N:
            nets = set()
            for b in cur:
                nets.update(bles[b].inputs)
                nets.add(bles[b].out)
            best, best_score = None, -1
            for cand in left:
                bc = bles[cand]
                score = len(nets & (set(bc.inputs) | {bc.out}))
                if score <= best_score:
                    continue
                members = [bles[x] for x in cur] + [bc]
                produced = {m.out for m in members}
                if len(_cluster_inputs(members, produced)) > I:
                    continue
                best, best_score = cand, score
            if best is None:
                break
            cur.append(best)
            left.remove(best)
        clusters.append(cur)
    return clusters


def _nets(d: MappedDesign, bles: dict[str, Ble]) -> dict[str, list[str]]:
    """Design net -> list of objects (cluster BLE names or port names) on it."""
    n = d.lut_netlist
    nets: dict[str, list[str]] = {}
    for b in bles.values():
        nets.setdefault(b.out, []).append("ble:" + b.name)
        for i in b.inputs:
            nets.setdefault(i, []).append("ble:" + b.name)
    for i in n.data_inputs:
        nets.setdefault(i, []).append("port:" + i)
    for port, net in n.outputs:
        nets.setdefault(net, []).append("port:" + port)
    return {k: sorted(set(v)) for k, v in nets.items() if len(set(v)) > 1}


def pack_place(d: MappedDesign, f: Fabric, seed: int = 0) -> Placement:
    """Pack BLEs into CLBs, then anneal CLB and pad positions to minimise
    total half-perimeter wirelength."""
    check_capacity(d, f)
    p = f.params
    arch = f.arch
    bles = build_bles(d)
    clusters = pack(bles, p.N, p.I)
    if len(clusters) > len(arch.clbs):
        raise CapacityExceeded("CLB", len(clusters), len(arch.clbs))
    n = d.lut_netlist
    ports = list(n.data_inputs) + [po for po, _ in n.outputs]
    rng = random.Random(seed)

    clb_sites = list(arch.clbs)
    pad_sites = list(arch.pads)
    # initial placement: in order
    cl_site = {ci: clb_sites[ci] for ci in range(len(clusters))}
    port_site = {pt: pad_sites[i] for i, pt in enumerate(ports)}
    cluster_of = {b: ci for ci, members in enumerate(clusters) for b in members}
    nets = _nets(d, bles)

    def pos(obj: str) -> tuple[int, int]:
        kind, name = obj.split(":", 1)
        if kind == "ble":
            return cl_site[cluster_of[name]]
        x, y, _ = port_site[name]
        return (x, y)

    def hpwl(objs: list[str]) -> int:
        xs, ys = zip(*(pos(o) for o in objs))
        return max(xs) - min(xs) + max(ys) - min(ys)

    obj_nets: dict[str, list[str]] = {}
    for net, objs in nets.items():
        for o in objs:
            key = o if o.startswith("port:") else "cl:%d" % cluster_of[o[4:]]
            obj_nets.setdefault(key, []).append(net)
    net_cost = {net: hpwl(objs) for net, objs in nets.items()}
    total = sum(net_cost.values())

    movable = [f"cl:{ci}" for ci in range(len(clusters))] + [f"port:{pt}" for pt in ports]

    def propose():
        obj = movable[rng.randrange(len(movable))]
        if obj.startswith("cl:"):
            site = clb_sites[rng.randrange(len(clb_sites))]
            return obj, site
        site = pad_sites[rng.randrange(len(pad_sites))]
        return obj, site

    def apply(obj: str, site):
        """Move obj to site, swapping with any occupant.  Returns undo info."""
        if obj.startswith("cl:"):
            ci = int(obj[3:])
            old = cl_site[ci]
            other = next((cj for cj, s in cl_site.items() if s == site and cj != ci), None)
            cl_site[ci] = site
            if other is not None:
                cl_site[other] = old
            return [obj] + ([f"cl:{other}"] if other is not None else []), (ci, old, other)
        pt = obj[5:]
        old = port_site[pt]
        other = next((q for q, s in port_site.items() if s == site and q != pt), None)
        port_site[pt] = site
        if other is not None:
            port_site[other] = old
        return [obj] + ([f"port:{other}"] if other is not None else []), (pt, old, other)

    def undo(obj: str, info) -> None:
        a, old, other = info
        if obj.startswith("cl:"):
            site = cl_site[a]
            cl_site[a] = old
            if other is not None:
                cl_site[other] = site
        else:
            site = port_site[a]
            port_site[a] = old
            if other is not None:
                port_site[other] = site

    def delta(objs: list[str]) -> tuple[int, dict[str, int]]:
        touched = set()
        for o in objs:
            touched.update(obj_nets.get(o, ()))
        new = {net: hpwl(nets[net]) for net in sorted(touched)}
        return sum(new[k] - net_cost[k] for k in new), new

    if movable and nets:
        # initial temperature from the spread of random move costs
        samples = []
        for _ in range(min(50, 5 * len(movable))):
            obj, site = propose()
            moved, info = apply(obj, site)
            dc, _ = delta(moved)
            samples.append(dc)
            undo(obj, info)
        mean = sum(samples) / len(samples)
        sd = math.sqrt(sum((s - mean) ** 2 for s in samples) / len(samples))
        temp = 20.0 * sd if sd > 0 else 1.0
        moves = SA_MOVES_PER_OBJECT * len(movable)
        for _ in range(SA_MAX_ROUNDS):
            for _ in range(moves):
                obj, site = propose()
                moved, info = apply(obj, site)
                dc, new = delta(moved)
                if dc <= 0 or rng.random() < math.exp(-dc / temp):
                    net_cost.update(new)
                    total += dc
                else:
                    undo(obj, info)
            temp *= SA_ALPHA
            if temp < SA_MIN_TEMP:
                break

    clb_of, slot_of = {}, {}
    for ci, members in enumerate(clusters):
        for s, b in enumerate(members):
            clb_of[b] = cl_site[ci]
            slot_of[b] = s
    port_dir = {pt: "in" for pt in n.data_inputs}
    port_dir.update({po: "out" for po, _ in n.outputs})
    pl = Placement(d, f, bles, clb_of, slot_of, dict(port_site), port_dir, float(total))
    pl.check()
    return pl
