"""Reader for the flat BLIF subset used as the module-ingest format."""

from __future__ import annotations

from .errors import ParseError
from .netlist import Netlist, NetlistBuilder

MAX_NAMES_INPUTS = 16
_SUPPORTED = {".model", ".inputs", ".outputs", ".names", ".latch", ".end"}


def _logical_lines(text: str):
    """Yield (line number, tokens) with comments stripped and ``\\`` continuations joined."""
    buf: list[str] = []
    start = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if start is None:
            start = no
        if line.endswith("\\"):
            buf.append(line[:-1])
            continue
        buf.append(line)
        toks = " ".join(buf).split()
        buf = []
        if toks:
            yield start, toks
        start = None
    if buf and " ".join(buf).split():
        yield start, " ".join(buf).split()


def cover_to_table(cubes: list[tuple[str, str]], k: int, line: int) -> int:
    """Truth table (LSB-first) of a single-output cover."""
    if not cubes:
        return 0
    polarity = {out for _, out in cubes}
    if len(polarity) != 1 or not polarity <= {"0", "1"}:
        raise ParseError("cover mixes ON-set and OFF-set rows or has a bad output value", line)
    table = 0
    for m in range(1 << k):
        for pattern, _ in cubes:
            if all(ch == "-" or int(ch) == (m >> j) & 1 for j, ch in enumerate(pattern)):
                table |= 1 << m
                break
    if polarity == {"0"}:
        table ^= (1 << (1 << k)) - 1
    return table


def parse_blif(text: str) -> Netlist:
    """Parse a single flat ``.model``; ``.names`` become LUTs, ``.latch`` become user_clk DFFs."""
    name = None
    inputs: list[str] = []
    outputs: list[str] = []
    names: list[tuple[int, list[str], list[tuple[str, str]]]] = []
    latches: list[tuple[int, str, str, int]] = []
    current: list[tuple[str, str]] | None = None
    current_k = 0
    ended = False

    for no, toks in _logical_lines(text):
        head = toks[0]
        if head.startswith("."):
            current = None
            if ended:
                raise ParseError(f"directive {head} after .end", no)
            if head not in _SUPPORTED:
                raise ParseError(f"unsupported directive {head}", no)
            if head == ".model":
                if name is not None:
                    raise ParseError("multiple .model sections are not supported", no)
                if len(toks) != 2:
                    raise ParseError(".model takes exactly one name", no)
                name = toks[1]
            elif head == ".inputs":
                inputs.extend(toks[1:])
            elif head == ".outputs":
                outputs.extend(toks[1:])
            elif head == ".names":
                sigs = toks[1:]
                if not sigs:
                    raise ParseError(".names needs at least an output signal", no)
                if len(sigs) - 1 > MAX_NAMES_INPUTS:
                    raise ParseError(f".names with {len(sigs) - 1} inputs exceeds {MAX_NAMES_INPUTS}", no)
                current = []
                current_k = len(sigs) - 1
                names.append((no, sigs, current))
            elif head == ".latch":
                args = toks[1:]
                if len(args) not in (2, 3, 5):
                    raise ParseError(".latch expects: input output [type control] [init]", no)
                init = 0
                if len(args) >= 4:
                    if args[2] != "re":
                        raise ParseError(f"latch type {args[2]!r} unsupported (only 're')", no)
                if len(args) in (3, 5):
                    raw = args[-1]
                    if raw not in ("0", "1", "2", "3"):
                        raise ParseError(f"bad latch init value {raw!r}", no)
                    init = 1 if raw == "1" else 0
                latches.append((no, args[0], args[1], init))
            elif head == ".end":
                ended = True
            continue
        if current is None:
            raise ParseError(f"unexpected line {' '.join(toks)!r}", no)
        if current_k == 0:
            if len(toks) != 1 or toks[0] not in ("0", "1"):
                raise ParseError("constant .names row must be a single 0/1", no)
            current.append(("", toks[0]))
            continue
        if len(toks) != 2 or len(toks[0]) != current_k or set(toks[0]) - set("01-"):
            raise ParseError(f"bad cover row for {current_k}-input .names", no)
        current.append((toks[0], toks[1]))

    if name is None:
        raise ParseError("missing .model")

    defined = set(inputs)
    for no, sigs, _ in names:
        if sigs[-1] in defined:
            raise ParseError(f"signal {sigs[-1]!r} defined twice", no)
        defined.add(sigs[-1])
    for no, _, q, _ in latches:
        if q in defined:
            raise ParseError(f"signal {q!r} defined twice", no)
        defined.add(q)
    for no, sigs, _ in names:
        for s in sigs[:-1]:
            if s not in defined:
                raise ParseError(f"undefined signal {s!r}", no)
    for no, d, _, _ in latches:
        if d not in defined:
            raise ParseError(f"undefined signal {d!r}", no)
    for o in outputs:
        if o not in defined:
            raise ParseError(f"undefined output signal {o!r}")

    b = NetlistBuilder(name)
    for i in inputs:
        b.add_input(i)
    for no, sigs, cubes in names:
        k = len(sigs) - 1
        b.lut(sigs[:-1], cover_to_table(cubes, k, no), output=sigs[-1])
    for _, d, q, init in latches:
        b.dff(d, "user_clk", output=q, init=init)
    for o in outputs:
        b.add_output(o, o)
    return b.build()


def write_blif(n: Netlist) -> str:
    """Emit a netlist made of LUTs and user_clk DFFs as BLIF (ON-set minterm covers)."""
    lines = [f".model {n.name}", ".inputs " + " ".join(n.data_inputs),
             ".outputs " + " ".join(p for p, _ in n.outputs)]
    for c in n.cells:
        if c.kind == "LUT":
            lines.append(".names " + " ".join(c.inputs + (c.output,)))
            for m in range(1 << c.k):
                if (c.table >> m) & 1:
                    row = "".join(str((m >> j) & 1) for j in range(c.k))
                    lines.append(f"{row} 1" if c.k else "1")
        elif c.kind == "DFF":
            lines.append(f".latch {c.inputs[0]} {c.output} re clk {c.init}")
        else:
            raise ValueError(f"write_blif handles LUT/DFF only, got {c.kind}")
    for port, net in n.outputs:
        if port != net:
            lines.append(f".names {net} {port}\n1 1")
    lines.append(".end")
    return "\n".join(lines) + "\n"
