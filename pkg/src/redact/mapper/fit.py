"""Smallest-fabric search and utilization reporting."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field, replace

from ..errors import CapacityExceeded, GiveUp, RedactError, Unroutable
from ..fabric import (Bitstream, Fabric, FabricParams, generate_fabric, load_bitstream,
                      pad_in_port)
from ..netlist import Netlist
from ..sim import exhaustive_inputs, simulate_lanes
from .bitgen import emit_bitstream, pin_map
from .pack import Placement, pack_place
from .route import RoutingResult, route
from .techmap import MappedDesign, tech_map

log = logging.getLogger(__name__)

W_MAX = 12
EXHAUSTIVE_LIMIT = 16
RANDOM_VECTORS = 10000

CSV_FIELDS = ("module", "fabric", "io_utilization", "clb_utilization", "lut_utilization",
              "bitstream_length")


@dataclass
class FitReport:
    module: str
    W: int
    pins: int
    total_pads: int
    luts: int
    clbs_used: int
    dffs: int
    io_utilization: float
    clb_utilization: float
    lut_utilization: float
    bitstream_length: int
    category_bits: dict[str, int] = field(default_factory=dict)
    attempts: list[dict] = field(default_factory=list)
    pins_map: dict[str, str] = field(default_factory=dict)
    verified: str = ""
    seed: int = 0

    @property
    def fabric(self) -> str:
        return f"{self.W}x{self.W}"

    def to_json(self) -> str:
        obj = asdict(self)
        obj["fabric"] = self.fabric
        return json.dumps(obj, indent=1, sort_keys=True) + "\n"

    def row(self) -> dict:
        return {"module": self.module, "fabric": self.fabric,
                "io_utilization": f"{self.io_utilization:.1f}",
                "clb_utilization": f"{self.clb_utilization:.1f}",
                "lut_utilization": f"{self.lut_utilization:.1f}",
                "bitstream_length": self.bitstream_length}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerow(self.row())
        return buf.getvalue()


@dataclass
class Implementation:
    fabric: Fabric
    design: MappedDesign
    placement: Placement
    routing: RoutingResult
    bitstream: Bitstream


def lower_bound_w(pins: int, luts: int, p: FabricParams) -> int:
    """Smallest W meeting both pad and LUT capacity."""
    w_io = math.ceil(pins / (4 * p.pads_per_io_tile)) if pins else 1
    w_lut = math.ceil(math.sqrt(luts / p.N)) if luts else 1
    w = max(1, w_io, w_lut)
    while w * w * p.N < luts:        # guard against float rounding
        w += 1
    return w


def implement(d: MappedDesign, f: Fabric, seed: int = 0) -> Implementation:
    pl = pack_place(d, f, seed)
    rr = route(pl, f, seed)
    return Implementation(f, d, pl, rr, emit_bitstream(pl, rr, f))


def verify_configured(f: Fabric, b: Bitstream, module: Netlist, pins: dict[str, str],
                      seed: int = 0, placement: Placement | None = None) -> str:
    """Check the configured fabric against ``module``; returns how it was checked.

    Unused pad inputs and the scan input are held at 0.  For sequential
    modules, each design register is matched with the fabric flip-flop of
    its logic element so next-state functions are compared too.
    """
    cfg = load_bitstream(f, b)
    names = list(module.data_inputs)
    regs: list[tuple[str, str]] = []
    if module.dffs():
        if placement is None:
            raise ValueError("sequential modules need the placement to match registers")
        drv = cfg.driver
        for name, ble in placement.bles.items():
            if ble.dff:
                x, y = placement.clb_of[name]
                fab_ff = drv[f"clb_{x}_{y}_ff{placement.slot_of[name]}"].id
                regs.append((ble.dff, fab_ff))
        regs.sort()
    width = len(names) + len(regs)
    if width <= EXHAUSTIVE_LIMIT:
        lanes, nl = exhaustive_inputs(names + [f"$ff:{r}" for r, _ in regs])
        how = "exhaustive"
    else:
        nl = RANDOM_VECTORS
        rng = random.Random(seed)
        lanes = {x: rng.getrandbits(nl) for x in names + [f"$ff:{r}" for r, _ in regs]}
        how = f"{RANDOM_VECTORS} random vectors"
    mod_state = {r: lanes[f"$ff:{r}"] for r, _ in regs}
    fab_state = {ff: lanes[f"$ff:{r}"] for r, ff in regs}
    ref = simulate_lanes(module, {x: lanes[x] for x in names}, nl, "acyclic",
                         state_lanes=mod_state)
    fin = {i: 0 for i in cfg.inputs}
    for x in names:
        fin[pins[x]] = lanes[x]
    got = simulate_lanes(cfg, fin, nl, "fixed_point", state_lanes=fab_state)
    full = (1 << nl) - 1
    if got.stable != full:
        raise RedactError("configured fabric does not settle")
    ro, go = ref.outputs(), got.outputs()
    for port, _ in module.outputs:
        if ro[port] != go[pins[port]]:
            raise RedactError(f"configured fabric differs from the module at output {port}")
    fab_drv = {c.id: c for c in cfg.dffs("user_clk")}
    mod_drv = {c.id: c for c in module.dffs()}
    for r, ff in regs:
        if ref.net(mod_drv[r].inputs[0]) != got.net(fab_drv[ff].inputs[0]):
            raise RedactError(f"next state of register {r} differs")
    return how


def fit_search(module: Netlist, params: FabricParams | None = None, seed: int = 0,
               w_max: int = W_MAX, w_min: int | None = None,
               verify: bool = True) -> tuple[Fabric, FitReport, Bitstream, Implementation]:
    """Implement ``module`` on the smallest fabric the flow succeeds on.

    Starts from the capacity lower bound (or ``w_min`` if larger) and grows
    ``W`` after every failed pack/place/route attempt.
    """
    base = params or FabricParams()
    d = tech_map(module, base.K)
    pins = d.num_pins
    luts = len(d.luts)
    start = lower_bound_w(pins, luts, base)
    attempts: list[dict] = []
    for w in range(1, start):
        attempts.append({"W": w, "outcome": "capacity", "detail": "below capacity lower bound"})
    if w_min is not None and w_min > start:
        for w in range(start, w_min):
            attempts.append({"W": w, "outcome": "skipped", "detail": "below w_min"})
        start = w_min
    for w in range(start, w_max + 1):
        p = replace(base, W=w)
        f = generate_fabric(p)
        try:
            impl = implement(d, f, seed)
        except (CapacityExceeded, Unroutable) as e:
            log.info("W=%d failed: %s", w, e)
            out = "capacity" if isinstance(e, CapacityExceeded) else "unroutable"
            attempts.append({"W": w, "outcome": out, "detail": str(e)})
            continue
        attempts.append({"W": w, "outcome": "ok", "detail": f"routed in {impl.routing.iterations} iterations"})
        pm = pin_map(impl.placement)
        how = ""
        if verify:
            how = verify_configured(f, impl.bitstream, module, pm, seed, impl.placement)
        from ..fabric import bit_categories
        rep = FitReport(
            module=module.name, W=w, pins=pins, total_pads=p.total_pads, luts=luts,
            clbs_used=len(set(impl.placement.clb_of.values())), dffs=len(d.dffs),
            io_utilization=100.0 * pins / p.total_pads,
            clb_utilization=100.0 * len(set(impl.placement.clb_of.values())) / (w * w),
            lut_utilization=100.0 * luts / (w * w * p.N),
            bitstream_length=len(impl.bitstream), category_bits=bit_categories(f),
            attempts=attempts, pins_map=pm, verified=how, seed=seed)
        return f, rep, impl.bitstream, impl
    raise GiveUp(f"no fabric up to W={w_max} fits {module.name} "
                 f"({pins} pins, {luts} LUTs)")


__all__ = ["FitReport", "Implementation", "fit_search", "implement", "lower_bound_w",
           "verify_configured", "pad_in_port"]
