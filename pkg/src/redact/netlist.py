"""Gate-level netlist IR shared by fabrics, mapped modules and attack circuits.

Every cell has exactly one output net.  Input pins are stored positionally in
the canonical pin order of the cell kind (see :data:`PINS`); LUT pins are
``i0 .. i{k-1}``.  LUT truth tables are integers read LSB-first: bit
``sum(v_j << j)`` is the output when input pin ``j`` carries ``v_j``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable

import jsonschema

from .errors import NetlistFormatError

KINDS = (
    "INPUT_BUF", "OUTPUT_BUF", "LUT", "MUX2", "DFF", "CONST0", "CONST1",
    "NOT", "AND2", "OR2", "XOR2",
)

PINS = {
    "INPUT_BUF": ("a",),
    "OUTPUT_BUF": ("a",),
    "MUX2": ("a", "b", "sel"),
    "DFF": ("d",),
    "CONST0": (),
    "CONST1": (),
    "NOT": ("a",),
    "AND2": ("a", "b"),
    "OR2": ("a", "b"),
    "XOR2": ("a", "b"),
}

DEFAULT_CLOCKS = ("user_clk", "prog_clk")


def pin_names(kind: str, k: int = 0) -> tuple[str, ...]:
    if kind == "LUT":
        return tuple(f"i{j}" for j in range(k))
    return PINS[kind]


@dataclass(frozen=True)
class Cell:
    id: str
    kind: str
    inputs: tuple[str, ...]
    output: str
    k: int = 0
    table: int = 0
    clock: str | None = None
    init: int = 0

    @property
    def pins(self) -> tuple[str, ...]:
        return pin_names(self.kind, self.k)

    def pin_map(self) -> dict[str, str]:
        return dict(zip(self.pins, self.inputs))


@dataclass(frozen=True, eq=False)
class Netlist:
    """Immutable netlist.  Derived indexes are computed lazily and cached."""

    name: str
    cells: tuple[Cell, ...] = ()
    nets: tuple[str, ...] = ()
    inputs: tuple[str, ...] = ()
    outputs: tuple[tuple[str, str], ...] = ()
    clocks: tuple[str, ...] = DEFAULT_CLOCKS

    @cached_property
    def cell_index(self) -> dict[str, Cell]:
        return {c.id: c for c in self.cells}

    @cached_property
    def driver(self) -> dict[str, Cell | None]:
        """Net -> driving cell, or None for a primary input."""
        d: dict[str, Cell | None] = {n: None for n in self.inputs}
        for c in self.cells:
            d[c.output] = c
        return d

    @cached_property
    def fanout(self) -> dict[str, list[tuple[Cell, int]]]:
        """Net -> list of (consumer cell, input position)."""
        fo: dict[str, list[tuple[Cell, int]]] = {n: [] for n in self.nets}
        for c in self.cells:
            for pos, net in enumerate(c.inputs):
                fo.setdefault(net, []).append((c, pos))
        return fo

    @cached_property
    def output_nets(self) -> frozenset[str]:
        return frozenset(net for _, net in self.outputs)

    @property
    def data_inputs(self) -> tuple[str, ...]:
        """Primary inputs excluding clock ports."""
        clocks = set(self.clocks)
        return tuple(n for n in self.inputs if n not in clocks)

    def dffs(self, clock: str | None = None) -> list[Cell]:
        return [c for c in self.cells
                if c.kind == "DFF" and (clock is None or c.clock == clock)]

    def output_net(self, port: str) -> str:
        for p, net in self.outputs:
            if p == port:
                return net
        raise KeyError(port)

    def replace(self, **changes) -> "Netlist":
        return replace(self, **changes)

    def __repr__(self) -> str:
        return (f"Netlist({self.name!r}, cells={len(self.cells)}, nets={len(self.nets)}, "
                f"inputs={len(self.inputs)}, outputs={len(self.outputs)})")


class NetlistBuilder:
    """Incremental construction helper; ``build()`` freezes the result."""

    def __init__(self, name: str, clocks: Iterable[str] = DEFAULT_CLOCKS):
        self.name = name
        self.clocks = tuple(clocks)
        self.cells: list[Cell] = []
        self.nets: list[str] = []
        self._netset: set[str] = set()
        self.inputs: list[str] = []
        self.outputs: list[tuple[str, str]] = []
        self._auto = 0

    def _fresh(self, prefix: str) -> str:
        while True:
            self._auto += 1
            name = f"{prefix}{self._auto}"
            if name not in self._netset:
                return name

    def net(self, name: str) -> str:
        if name not in self._netset:
            self._netset.add(name)
            self.nets.append(name)
        return name

    def add_input(self, name: str) -> str:
        self.net(name)
        self.inputs.append(name)
        return name

    def add_output(self, port: str, net: str) -> None:
        self.outputs.append((port, net))

    def add_cell(self, kind: str, inputs: Iterable[str] = (), output: str | None = None,
                 cell_id: str | None = None, **params) -> str:
        if output is None:
            output = self._fresh("_n")
        self.net(output)
        for n in inputs:
            self.net(n)
        self.cells.append(Cell(id=cell_id or output, kind=kind, inputs=tuple(inputs),
                               output=output, **params))
        return output

    # shorthand constructors
    def const(self, value: int, output: str | None = None) -> str:
        return self.add_cell("CONST1" if value else "CONST0", (), output)

    def gate(self, kind: str, *inputs: str, output: str | None = None) -> str:
        return self.add_cell(kind, inputs, output)

    def mux(self, a: str, b: str, sel: str, output: str | None = None) -> str:
        return self.add_cell("MUX2", (a, b, sel), output)

    def lut(self, inputs: Iterable[str], table: int, output: str | None = None) -> str:
        inputs = tuple(inputs)
        return self.add_cell("LUT", inputs, output, k=len(inputs), table=table)

    def dff(self, d: str, clock: str, output: str | None = None, init: int = 0,
            cell_id: str | None = None) -> str:
        return self.add_cell("DFF", (d,), output, cell_id=cell_id, clock=clock, init=init)

    def build(self) -> Netlist:
        return Netlist(self.name, tuple(self.cells), tuple(self.nets), tuple(self.inputs),
                       tuple(self.outputs), self.clocks)


# --------------------------------------------------------------------------
# integrity

@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind}({self.subject}){': ' + self.detail if self.detail else ''}"


def check_integrity(n: Netlist) -> list[Violation]:
    """Return every invariant violation found in ``n`` (empty list if sound)."""
    out: list[Violation] = []
    netset = set()
    for net in n.nets:
        if net in netset:
            out.append(Violation("DuplicateNet", net))
        netset.add(net)
    seen_cells = set()
    for c in n.cells:
        if c.id in seen_cells:
            out.append(Violation("DuplicateCell", c.id))
        seen_cells.add(c.id)

    drivers: dict[str, list[str]] = {}
    for pi in n.inputs:
        drivers.setdefault(pi, []).append(f"input:{pi}")
        if pi not in netset:
            out.append(Violation("UndeclaredNet", pi, "primary input"))
    for c in n.cells:
        if c.kind not in KINDS:
            out.append(Violation("UnknownKind", c.id, c.kind))
            continue
        drivers.setdefault(c.output, []).append(c.id)
        if c.output not in netset:
            out.append(Violation("UndeclaredNet", c.output, f"output of {c.id}"))
        expected = len(pin_names(c.kind, c.k))
        if len(c.inputs) != expected:
            out.append(Violation("PinCount", c.id, f"{len(c.inputs)} connected, {expected} expected"))
        for pin, net in zip(pin_names(c.kind, c.k), c.inputs):
            if not net or net not in netset:
                out.append(Violation("DanglingPin", c.id, f"pin {pin} -> {net!r}"))
        if c.kind == "LUT":
            if c.k < 0 or c.table < 0 or c.table >> (1 << c.k):
                out.append(Violation("LutTable", c.id, f"table does not fit 2^{c.k} bits"))
        if c.kind == "DFF":
            if not c.clock or c.clock not in n.clocks:
                out.append(Violation("DffClock", c.id, f"clock {c.clock!r}"))
            if c.init not in (0, 1):
                out.append(Violation("DffInit", c.id, str(c.init)))

    for net in n.nets:
        ds = drivers.get(net, [])
        if len(ds) == 0:
            out.append(Violation("Undriven", net))
        elif len(ds) > 1:
            out.append(Violation("MultipleDriver", net, ", ".join(ds)))
    for port, net in n.outputs:
        if net not in netset:
            out.append(Violation("OutputPort", port, f"references unknown net {net!r}"))
    ports = [p for p, _ in n.outputs]
    if len(set(ports)) != len(ports):
        out.append(Violation("DuplicatePort", n.name, "output port names repeat"))
    return out


# --------------------------------------------------------------------------
# JSON serialization

NETLIST_SCHEMA = {
    "type": "object",
    "required": ["name", "cells", "nets", "inputs", "outputs"],
    "properties": {
        "name": {"type": "string"},
        "clocks": {"type": "array", "items": {"type": "string"}},
        "nets": {"type": "array", "items": {"type": "string"}},
        "inputs": {"type": "array", "items": {"type": "string"}},
        "outputs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["port", "net"],
                "properties": {"port": {"type": "string"}, "net": {"type": "string"}},
                "additionalProperties": False,
            },
        },
        "cells": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "kind", "pins", "out"],
                "properties": {
                    "id": {"type": "string"},
                    "kind": {"enum": list(KINDS)},
                    "pins": {"type": "object", "additionalProperties": {"type": "string"}},
                    "out": {"type": "string"},
                    "k": {"type": "integer", "minimum": 0, "maximum": 16},
                    "table": {"type": "string", "pattern": "^[01]*$"},
                    "clock": {"type": "string"},
                    "init": {"enum": [0, 1]},
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


def _cell_to_obj(c: Cell) -> dict:
    obj: dict = {"id": c.id, "kind": c.kind, "pins": c.pin_map(), "out": c.output}
    if c.kind == "LUT":
        obj["k"] = c.k
        obj["table"] = "".join("1" if (c.table >> i) & 1 else "0" for i in range(1 << c.k))
    if c.kind == "DFF":
        obj["clock"] = c.clock
        obj["init"] = c.init
    return obj


def netlist_to_obj(n: Netlist) -> dict:
    return {
        "name": n.name,
        "clocks": list(n.clocks),
        "inputs": list(n.inputs),
        "outputs": [{"port": p, "net": net} for p, net in n.outputs],
        "nets": list(n.nets),
        "cells": [_cell_to_obj(c) for c in n.cells],
    }


def write_netlist(n: Netlist) -> str:
    """Serialize to the JSON interchange format (deterministic key order)."""
    return json.dumps(netlist_to_obj(n), indent=1) + "\n"


def netlist_from_obj(obj: dict, check: bool = True) -> Netlist:
    try:
        jsonschema.validate(obj, NETLIST_SCHEMA)
    except jsonschema.ValidationError as e:
        raise NetlistFormatError(f"schema violation: {e.message}") from None
    cells = []
    for co in obj["cells"]:
        kind = co["kind"]
        k = co.get("k", 0)
        if kind == "LUT" and "table" in co and len(co["table"]) != 1 << k:
            raise NetlistFormatError(f"cell {co['id']}: table length {len(co['table'])} != 2^{k}")
        pins = pin_names(kind, k)
        extra = set(co["pins"]) - set(pins)
        if extra:
            raise NetlistFormatError(f"cell {co['id']}: unknown pins {sorted(extra)}")
        table = 0
        for i, ch in enumerate(co.get("table", "")):
            if ch == "1":
                table |= 1 << i
        cells.append(Cell(
            id=co["id"], kind=kind,
            inputs=tuple(co["pins"].get(p, "") for p in pins),
            output=co["out"], k=k, table=table,
            clock=co.get("clock"), init=co.get("init", 0),
        ))
    n = Netlist(
        name=obj["name"], cells=tuple(cells), nets=tuple(obj["nets"]),
        inputs=tuple(obj["inputs"]),
        outputs=tuple((o["port"], o["net"]) for o in obj["outputs"]),
        clocks=tuple(obj.get("clocks", DEFAULT_CLOCKS)),
    )
    if check:
        bad = check_integrity(n)
        if bad:
            raise NetlistFormatError("integrity violations: " + "; ".join(map(str, bad[:10])))
    return n


def read_netlist(text: str, check: bool = True) -> Netlist:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise NetlistFormatError(f"invalid JSON: {e}") from None
    return netlist_from_obj(obj, check=check)


def structural_key(n: Netlist) -> tuple:
    """Canonical sorted view used to compare netlists for isomorphism with equal ids."""
    return (
        n.name,
        tuple(sorted((c.id, c.kind, c.inputs, c.output, c.k, c.table, c.clock, c.init)
                     for c in n.cells)),
        tuple(sorted(n.nets)),
        tuple(n.inputs),
        tuple(n.outputs),
    )


def sweep_dead(n: Netlist, keep_inputs: bool = True) -> Netlist:
    """Drop cells not in the transitive fan-in of any output or DFF."""
    live: set[str] = set(n.output_nets)
    stack = list(live)
    for c in n.cells:
        if c.kind == "DFF":
            stack.append(c.output)
            live.add(c.output)
    drv = n.driver
    while stack:
        net = stack.pop()
        c = drv.get(net)
        if c is None:
            continue
        for i in c.inputs:
            if i not in live:
                live.add(i)
                stack.append(i)
    cells = tuple(c for c in n.cells if c.output in live)
    keep = set(live) | (set(n.inputs) if keep_inputs else set())
    nets = tuple(x for x in n.nets if x in keep)
    inputs = tuple(x for x in n.inputs if x in keep)
    return n.replace(cells=cells, nets=nets, inputs=inputs)


__all__ = [
    "KINDS", "PINS", "Cell", "Netlist", "NetlistBuilder", "Violation", "check_integrity",
    "write_netlist", "read_netlist", "netlist_to_obj", "netlist_from_obj", "structural_key",
    "pin_names", "sweep_dead",
]
