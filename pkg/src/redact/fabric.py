"""Parametric island-style eFPGA fabrics with a configuration scan chain.

Geometry
--------
Tiles live on a ``(W+2) x (W+2)`` grid.  CLBs occupy ``1..W`` in both
coordinates; the ``4*W`` non-corner perimeter tiles are I/O tiles.
Horizontal channel segment ``chanx(x, y)`` (``x in 1..W``, ``y in 0..W``) runs
above tile row ``y`` between switch blocks ``SB(x-1, y)`` and ``SB(x, y)``;
vertical segment ``chany(x, y)`` (``x in 0..W``, ``y in 1..W``) runs right of
column ``x`` between ``SB(x, y-1)`` and ``SB(x, y)``.  All segments have
length one.

Every routing resource is a net with a single driver: a balanced MUX2 tree
whose ``ceil(log2 P)`` select bits binary-encode which of its ``P``
candidates drives it.  Out-of-range codes select constant 0, as does code 0
for track drivers, so the all-zero bitstream leaves the routing idle.

Scan order
----------
Tiles row-major from ``(0, 0)`` (``y`` outer, ``x`` inner).  Inside a tile:
pad direction bits, then connection-block bits (CLB input pins, then pad
output selectors), then switch-block bits (track drivers of ``chanx(x, y)``
then ``chany(x, y)``), then CLB bits (all crossbar selectors, then LUT tables
LSB-first, then FF bypass bits).  Multi-bit selectors are stored LSB-first.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Iterator, Sequence

from .errors import FabricError, FingerprintMismatch, LengthMismatch, ParseError
from .netlist import Netlist, NetlistBuilder
from .sim import simulate_sequential

IO, ROUTING, LOGIC = "IO", "ROUTING", "LOGIC"
CATEGORIES = (IO, ROUTING, LOGIC)

BOTTOM, RIGHT, TOP, LEFT = "B", "R", "T", "L"
IN_SIDES = (BOTTOM, RIGHT, TOP, LEFT)
OUT_SIDES = (TOP, RIGHT, BOTTOM, LEFT)

CONST0 = "const0"


def clog2(n: int) -> int:
    return max(0, (n - 1).bit_length())


@dataclass(frozen=True)
class FabricParams:
    W: int = 3
    N: int = 8
    K: int = 4
    Wch: int = 8
    pads_per_io_tile: int = 1
    ff_bypass: bool = True
    sb_pattern: str = "disjoint"

    def __post_init__(self):
        problems = []
        if self.W < 1:
            problems.append("W >= 1")
        if self.N < 1:
            problems.append("N >= 1")
        if not 1 <= self.K <= 6:
            problems.append("1 <= K <= 6")
        if self.Wch < 2:
            problems.append("Wch >= 2")
        if self.pads_per_io_tile < 1:
            problems.append("pads_per_io_tile >= 1")
        if self.sb_pattern != "disjoint":
            problems.append("sb_pattern == 'disjoint'")
        if problems:
            raise FabricError("invalid fabric parameters, need " + ", ".join(problems))

    @property
    def I(self) -> int:
        """CLB input pins: the usual K(N+1)/2 cluster sizing rule."""
        return max(self.K, (self.K * (self.N + 1)) // 2)

    @property
    def total_pads(self) -> int:
        return 4 * self.W * self.pads_per_io_tile

    def to_obj(self) -> dict:
        return asdict(self)

    @classmethod
    def from_obj(cls, obj: dict) -> "FabricParams":
        return cls(**obj)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_obj(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


MICRO = FabricParams(W=2, N=2, K=2, Wch=4, pads_per_io_tile=1, ff_bypass=False)


def micro(W: int = 2) -> FabricParams:
    return FabricParams(W=W, N=2, K=2, Wch=4, pads_per_io_tile=1, ff_bypass=False)


@dataclass(frozen=True)
class BitInfo:
    index: int
    category: str
    tile: tuple[int, int]
    element: str


@dataclass
class Element:
    """A configurable element and the scan-chain bits that program it.

    ``kind`` is one of ``track``, ``ipin``, ``opad``, ``xbar`` (selectors with
    ``candidates``), ``lut``, ``bypass`` or ``dir``.
    """

    name: str
    kind: str
    category: str
    tile: tuple[int, int]
    node: str                                   # net driven by this element
    candidates: tuple[str, ...] = ()
    bits: list[int] = field(default_factory=list)

    def width(self, p: FabricParams) -> int:
        if self.candidates:
            return clog2(len(self.candidates))
        if self.kind == "lut":
            return 1 << p.K
        return 1


def seg_name(kind: str, x: int, y: int) -> str:
    return f"{kind}_{x}_{y}"


def track_node(seg: str, t: int) -> str:
    return f"{seg}_t{t}"


def ipin_node(x: int, y: int, p: int) -> str:
    return f"clb_{x}_{y}_in{p}"


def opin_node(x: int, y: int, o: int) -> str:
    return f"clb_{x}_{y}_out{o}"


def pad_in_port(x: int, y: int, p: int) -> str:
    return f"pad_in_{x}_{y}_{p}"


def pad_out_port(x: int, y: int, p: int) -> str:
    return f"pad_out_{x}_{y}_{p}"


def pad_sig_node(x: int, y: int, p: int) -> str:
    return f"pad_{x}_{y}_{p}_i"


class Architecture:
    """Routing-resource description derived from :class:`FabricParams`.

    This is the single source of truth for candidate lists and bit positions;
    the netlist generator, router and bitstream emitter all read it.
    """

    def __init__(self, p: FabricParams):
        self.params = p
        W = p.W
        self.clbs = [(x, y) for y in range(1, W + 1) for x in range(1, W + 1)]
        self.io_tiles = sorted(
            [(x, 0) for x in range(1, W + 1)] + [(x, W + 1) for x in range(1, W + 1)]
            + [(0, y) for y in range(1, W + 1)] + [(W + 1, y) for y in range(1, W + 1)],
            key=lambda t: (t[1], t[0]))
        self.pads = [(x, y, k) for (x, y) in self.io_tiles for k in range(p.pads_per_io_tile)]
        self.segments: dict[str, tuple[str, int, int]] = {}
        for y in range(0, W + 1):
            for x in range(1, W + 1):
                self.segments[seg_name("chanx", x, y)] = ("chanx", x, y)
        for y in range(1, W + 1):
            for x in range(0, W + 1):
                self.segments[seg_name("chany", x, y)] = ("chany", x, y)
        self.elements: dict[str, Element] = {}
        self._build_elements()
        self._assign_bits()

    # geometry ------------------------------------------------------------

    def sb_segments(self, i: int, j: int) -> list[str]:
        """Segments incident to SB(i, j): left, right, below, above."""
        W = self.params.W
        out = []
        if 1 <= i <= W:
            out.append(seg_name("chanx", i, j))
        if i + 1 <= W:
            out.append(seg_name("chanx", i + 1, j))
        if 1 <= j <= W:
            out.append(seg_name("chany", i, j))
        if j + 1 <= W:
            out.append(seg_name("chany", i, j + 1))
        return out

    def seg_ends(self, seg: str) -> tuple[tuple[int, int], tuple[int, int]]:
        kind, x, y = self.segments[seg]
        if kind == "chanx":
            return (x - 1, y), (x, y)
        return (x, y - 1), (x, y)

    def side_channel(self, x: int, y: int, side: str) -> str:
        """Channel segment adjacent to CLB (x, y) on ``side``."""
        return {
            BOTTOM: seg_name("chanx", x, y - 1),
            TOP: seg_name("chanx", x, y),
            LEFT: seg_name("chany", x - 1, y),
            RIGHT: seg_name("chany", x, y),
        }[side]

    def pad_channel(self, x: int, y: int) -> str:
        W = self.params.W
        if y == 0:
            return seg_name("chanx", x, 0)
        if y == W + 1:
            return seg_name("chanx", x, W)
        if x == 0:
            return seg_name("chany", 0, y)
        return seg_name("chany", W, y)

    def facing_outputs(self, seg: str) -> list[str]:
        """CLB output pins and pad inputs that may drive tracks of ``seg``."""
        p = self.params
        W = p.W
        kind, x, y = self.segments[seg]
        out = []
        if kind == "chanx":
            sides = [((x, y), TOP), ((x, y + 1), BOTTOM)]
        else:
            sides = [((x, y), RIGHT), ((x + 1, y), LEFT)]
        for (cx, cy), side in sides:
            if 1 <= cx <= W and 1 <= cy <= W:
                for o in range(p.N):
                    if OUT_SIDES[o % 4] == side:
                        out.append(opin_node(cx, cy, o))
        for (px, py, k) in self.pads:
            if self.pad_channel(px, py) == seg:
                out.append(pad_sig_node(px, py, k))
        return out

    def track_candidates(self, seg: str, t: int) -> tuple[str, ...]:
        cands = [CONST0]
        for (i, j) in self.seg_ends(seg):
            for other in self.sb_segments(i, j):
                if other != seg:
                    cands.append(track_node(other, t))
        cands.extend(self.facing_outputs(seg))
        return tuple(cands)

    # elements ------------------------------------------------------------

    def _add(self, e: Element) -> None:
        self.elements[e.name] = e

    def _build_elements(self) -> None:
        p = self.params
        for seg, (kind, x, y) in self.segments.items():
            for t in range(p.Wch):
                self._add(Element(f"sb.{seg}.t{t}", "track", ROUTING, (x, y),
                                  track_node(seg, t), self.track_candidates(seg, t)))
        for (x, y) in self.clbs:
            for pin in range(p.I):
                seg = self.side_channel(x, y, IN_SIDES[pin % 4])
                self._add(Element(f"cb.clb_{x}_{y}.in{pin}", "ipin", ROUTING, (x, y),
                                  ipin_node(x, y, pin),
                                  tuple(track_node(seg, t) for t in range(p.Wch))))
            xbar_src = tuple(ipin_node(x, y, q) for q in range(p.I)) + \
                tuple(opin_node(x, y, o) for o in range(p.N))
            for l in range(p.N):
                for j in range(p.K):
                    self._add(Element(f"clb_{x}_{y}.ble{l}.xbar{j}", "xbar", LOGIC, (x, y),
                                      f"clb_{x}_{y}_lut{l}_i{j}", xbar_src))
            for l in range(p.N):
                node = f"clb_{x}_{y}_lut{l}" if p.ff_bypass else opin_node(x, y, l)
                self._add(Element(f"clb_{x}_{y}.ble{l}.lut", "lut", LOGIC, (x, y), node))
            if p.ff_bypass:
                for l in range(p.N):
                    self._add(Element(f"clb_{x}_{y}.ble{l}.ff", "bypass", LOGIC, (x, y),
                                      opin_node(x, y, l)))
        for (x, y, k) in self.pads:
            seg = self.pad_channel(x, y)
            self._add(Element(f"io_{x}_{y}.pad{k}.dir", "dir", IO, (x, y),
                              pad_sig_node(x, y, k)))
            self._add(Element(f"cb.io_{x}_{y}.pad{k}.out", "opad", ROUTING, (x, y),
                              f"pad_{x}_{y}_{k}_o",
                              tuple(track_node(seg, t) for t in range(p.Wch))))

    def tile_elements(self, x: int, y: int) -> list[Element]:
        p = self.params
        es = self.elements
        out: list[Element] = []
        is_clb = 1 <= x <= p.W and 1 <= y <= p.W
        is_io = (x, y) in self._io_set
        if is_io:
            out += [es[f"io_{x}_{y}.pad{k}.dir"] for k in range(p.pads_per_io_tile)]
        if is_clb:
            out += [es[f"cb.clb_{x}_{y}.in{pin}"] for pin in range(p.I)]
        if is_io:
            out += [es[f"cb.io_{x}_{y}.pad{k}.out"] for k in range(p.pads_per_io_tile)]
        for kind in ("chanx", "chany"):
            seg = seg_name(kind, x, y)
            if seg in self.segments:
                out += [es[f"sb.{seg}.t{t}"] for t in range(p.Wch)]
        if is_clb:
            out += [es[f"clb_{x}_{y}.ble{l}.xbar{j}"] for l in range(p.N) for j in range(p.K)]
            out += [es[f"clb_{x}_{y}.ble{l}.lut"] for l in range(p.N)]
            if p.ff_bypass:
                out += [es[f"clb_{x}_{y}.ble{l}.ff"] for l in range(p.N)]
        return out

    @cached_property
    def _io_set(self) -> set[tuple[int, int]]:
        return set(self.io_tiles)

    def _assign_bits(self) -> None:
        p = self.params
        self.bit_map: list[BitInfo] = []
        self.scan_elements: list[Element] = []
        for y in range(p.W + 2):
            for x in range(p.W + 2):
                for e in self.tile_elements(x, y):
                    self.scan_elements.append(e)
                    for b in range(e.width(p)):
                        idx = len(self.bit_map)
                        e.bits.append(idx)
                        self.bit_map.append(BitInfo(idx, e.category, (x, y), f"{e.name}[{b}]"))
        if len(self.scan_elements) != len(self.elements):
            raise AssertionError("scan order missed elements")

    @property
    def num_bits(self) -> int:
        return len(self.bit_map)

    @cached_property
    def node_driver(self) -> dict[str, Element]:
        return {e.node: e for e in self.elements.values() if e.candidates}


# --------------------------------------------------------------------------
# netlist generation

def cfg_net(i: int) -> str:
    return f"cfg{i}"


def _mux_tree(b: NetlistBuilder, leaves: Sequence[str], sels: Sequence[str],
              out: str, prefix: str) -> None:
    """Balanced MUX2 tree; level j is selected by ``sels[j]``; missing leaves read const0."""
    level = list(leaves) + [CONST0] * ((1 << len(sels)) - len(leaves))
    for j, s in enumerate(sels):
        last = j == len(sels) - 1
        nxt = []
        for i in range(0, len(level), 2):
            lo, hi = level[i], level[i + 1]
            name = out if last else f"{prefix}.m{j}_{i // 2}"
            if lo == CONST0 and hi == CONST0 and not last:
                nxt.append(CONST0)
                continue
            b.mux(lo, hi, s, output=name)
            nxt.append(name)
        level = nxt


@dataclass(eq=False)
class Fabric:
    params: FabricParams
    arch: Architecture
    netlist: Netlist

    @property
    def bit_map(self) -> list[BitInfo]:
        return self.arch.bit_map

    @property
    def num_bits(self) -> int:
        return self.arch.num_bits

    @property
    def pad_inputs(self) -> list[str]:
        return [pad_in_port(*pd) for pd in self.arch.pads]

    @property
    def pad_outputs(self) -> list[str]:
        return [pad_out_port(*pd) for pd in self.arch.pads]

    def fingerprint(self) -> str:
        return self.params.fingerprint()


def generate_fabric(p: FabricParams) -> Fabric:
    """Build the gate-level fabric netlist for ``p`` (deterministic)."""
    arch = Architecture(p)
    b = NetlistBuilder(f"efpga_{p.W}x{p.W}")
    head = b.add_input("scan_in_head")
    b.add_input("prog_clk")
    b.add_input("user_clk")
    for pd in arch.pads:
        b.add_input(pad_in_port(*pd))

    prev = head
    for i in range(arch.num_bits):
        prev = b.dff(prev, "prog_clk", output=cfg_net(i), cell_id=f"cfg{i}")
    b.const(0, output=CONST0)

    for e in arch.scan_elements:
        sels = [cfg_net(i) for i in e.bits]
        if e.candidates:
            _mux_tree(b, e.candidates, sels, e.node, e.name)
        elif e.kind == "lut":
            x, y = e.tile
            l = int(e.name.split(".ble")[1].split(".")[0])
            ins = [f"clb_{x}_{y}_lut{l}_i{j}" for j in range(p.K)]
            _mux_tree(b, sels, ins, e.node, e.name)
        elif e.kind == "bypass":
            x, y = e.tile
            l = int(e.name.split(".ble")[1].split(".")[0])
            lut = f"clb_{x}_{y}_lut{l}"
            ff = b.dff(lut, "user_clk", output=f"clb_{x}_{y}_ff{l}")
            b.mux(lut, ff, sels[0], output=e.node)
        elif e.kind == "dir":
            x, y = e.tile
            k = int(e.name.rsplit("pad", 1)[1].split(".")[0])
            ndir = b.gate("NOT", sels[0], output=f"pad_{x}_{y}_{k}_ndir")
            b.gate("AND2", pad_in_port(x, y, k), ndir, output=e.node)
    for (x, y, k) in arch.pads:
        d = cfg_net(arch.elements[f"io_{x}_{y}.pad{k}.dir"].bits[0])
        b.gate("AND2", d, f"pad_{x}_{y}_{k}_o", output=pad_out_port(x, y, k))
        b.add_output(pad_out_port(x, y, k), pad_out_port(x, y, k))
    b.add_output("scan_out_tail", prev)
    return Fabric(p, arch, b.build())


def bit_categories(f: Fabric) -> dict[str, int]:
    counts = {c: 0 for c in CATEGORIES}
    for bi in f.bit_map:
        counts[bi.category] += 1
    return counts


# --------------------------------------------------------------------------
# bitstreams

@dataclass(frozen=True)
class Bitstream:
    bits: tuple[int, ...]
    fingerprint: str

    def __len__(self) -> int:
        return len(self.bits)

    def to_text(self, p: FabricParams) -> str:
        head = f"{p.W} {p.N} {p.K} {p.Wch} {p.pads_per_io_tile} {len(self.bits)} {self.fingerprint}"
        return head + "\n" + "".join(map(str, self.bits)) + "\n"

    @classmethod
    def from_text(cls, text: str) -> tuple["Bitstream", dict]:
        lines = text.strip("\n").split("\n")
        if len(lines) != 2:
            raise ParseError("bitstream file must have a header line and a bit line")
        head = lines[0].split()
        if len(head) != 7:
            raise ParseError("bitstream header needs: W N K Wch pads B fingerprint", 1)
        try:
            W, N, K, Wch, pads, B = map(int, head[:6])
        except ValueError:
            raise ParseError("non-integer bitstream header field", 1) from None
        bits = lines[1].strip()
        if set(bits) - {"0", "1"}:
            raise ParseError("bitstream line may only contain 0/1", 2)
        if len(bits) != B:
            raise LengthMismatch(f"header says {B} bits, found {len(bits)}")
        header = {"W": W, "N": N, "K": K, "Wch": Wch, "pads_per_io_tile": pads, "B": B}
        return cls(tuple(int(ch) for ch in bits), head[6]), header


def bitmap_sidecar(f: Fabric) -> str:
    return json.dumps({
        "params": f.params.to_obj(),
        "fingerprint": f.fingerprint(),
        "bit_map": [{"index": b.index, "category": b.category, "tile": list(b.tile),
                     "element": b.element} for b in f.bit_map],
    }, indent=1) + "\n"


def zero_bitstream(f: Fabric) -> Bitstream:
    return Bitstream((0,) * f.num_bits, f.fingerprint())


def _check(f: Fabric, b: Bitstream) -> None:
    if len(b.bits) != f.num_bits:
        raise LengthMismatch(f"bitstream has {len(b.bits)} bits, fabric needs {f.num_bits}")
    if b.fingerprint != f.fingerprint():
        raise FingerprintMismatch(f"bitstream for {b.fingerprint}, fabric is {f.fingerprint()}")


def config_state(f: Fabric, b: Bitstream) -> dict[str, int]:
    """Config-DFF state (cell id -> bit) corresponding to ``b``."""
    return {f"cfg{i}": v for i, v in enumerate(b.bits)}


def shift_in(f: Fabric, b: Bitstream) -> dict[str, int]:
    """Serially shift ``b`` through ``scan_in_head``; returns the resulting config state."""
    stim = [{"scan_in_head": bit} for bit in reversed(b.bits)]
    trace = simulate_sequential(f.netlist, "prog_clk", stim, outputs=False)
    final = trace[-1].state if trace else {c.id: c.init for c in f.netlist.dffs()}
    return {c.id: final[c.id] for c in f.netlist.dffs("prog_clk")}


def load_bitstream(f: Fabric, b: Bitstream, method: str = "direct") -> Netlist:
    """Return the fabric netlist with config DFFs initialised to the loaded bits."""
    _check(f, b)
    if method == "direct":
        state = config_state(f, b)
    elif method == "serial_shift":
        state = shift_in(f, b)
    else:
        raise ValueError(f"unknown load method {method!r}")
    cells = tuple(replace(c, init=state[c.id])
                  if c.kind == "DFF" and c.clock == "prog_clk" else c
                  for c in f.netlist.cells)
    return f.netlist.replace(cells=cells, name=f.netlist.name + "_configured")


def iter_elements(f: Fabric, kind: str | None = None) -> Iterator[Element]:
    for e in f.arch.scan_elements:
        if kind is None or e.kind == kind:
            yield e


def fabric_to_obj(f: Fabric) -> dict:
    from .netlist import netlist_to_obj
    return {"format": "redact-fabric/1", "params": f.params.to_obj(),
            "fingerprint": f.fingerprint(), "netlist": netlist_to_obj(f.netlist)}


def write_fabric(f: Fabric) -> str:
    return json.dumps(fabric_to_obj(f), indent=1) + "\n"


def read_fabric(text: str) -> Fabric:
    """Load a fabric file; the netlist must match a regeneration from its params."""
    from .netlist import netlist_from_obj
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid fabric JSON: {e}") from None
    if obj.get("format") != "redact-fabric/1":
        raise ParseError("not a redact fabric file")
    p = FabricParams.from_obj(obj["params"])
    n = netlist_from_obj(obj["netlist"])
    arch = Architecture(p)
    return Fabric(p, arch, n)
