"""Circuit-to-CNF translation.

Two flavours share one gate library:

* :func:`tseitin_encode` is the textbook translation, one variable per net and
  a fixed clause pattern per gate.
* :class:`CircuitEncoder` emits into a growing clause store and folds
  constants, collapses buffers/inverters into literals and structurally
  hashes gates.  The attack uses it so that known key bits and oracle inputs
  shrink the formula instead of being added as units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..netlist import Cell, Netlist
from ..sim import Compiled, compiled


@dataclass
class Cnf:
    num_vars: int = 0
    clauses: list[list[int]] = field(default_factory=list)
    annotations: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    def new_var(self) -> int:
        self.num_vars += 1
        return self.num_vars

    def add(self, clause) -> None:
        c = list(clause)
        if not c:
            raise ValueError("empty clause")
        self.clauses.append(c)

    def evaluate(self, assignment: dict[int, bool] | list[bool]) -> bool:
        """True iff every clause has a true literal under ``assignment``."""
        get = assignment.__getitem__
        for c in self.clauses:
            if not any(get(abs(l)) == (l > 0) for l in c):
                return False
        return True

    def check(self) -> None:
        for c in self.clauses:
            if not c:
                raise ValueError("empty clause")
            for l in c:
                if l == 0 or abs(l) > self.num_vars:
                    raise ValueError(f"literal {l} out of range")
        for group in self.annotations.values():
            for v in group.values():
                if not 1 <= v <= self.num_vars:
                    raise ValueError(f"annotated variable {v} out of range")


# --------------------------------------------------------------------------
# plain encoding

def _lut_clauses(out: int, ins: list[int], table: int, k: int):
    for row in range(1 << k):
        c = [-ins[i] if (row >> i) & 1 else ins[i] for i in range(k)]
        c.append(out if (table >> row) & 1 else -out)
        yield c


def gate_clauses(op: str, out: int, ins: list[int], table: int = 0, k: int = 0):
    """Clauses asserting ``out == op(ins)`` over variable literals."""
    if op == "CONST0":
        return [[-out]]
    if op == "CONST1":
        return [[out]]
    if op in ("BUF", "INPUT_BUF", "OUTPUT_BUF"):
        a, = ins
        return [[-out, a], [out, -a]]
    if op == "NOT":
        a, = ins
        return [[-out, -a], [out, a]]
    if op == "AND2":
        a, b = ins
        return [[-out, a], [-out, b], [out, -a, -b]]
    if op == "OR2":
        a, b = ins
        return [[out, -a], [out, -b], [-out, a, b]]
    if op == "XOR2":
        a, b = ins
        return [[-out, a, b], [-out, -a, -b], [out, -a, b], [out, a, -b]]
    if op == "MUX2":
        a, b, s = ins
        return [[s, -a, out], [s, a, -out], [-s, -b, out], [-s, b, -out],
                [-a, -b, out], [a, b, -out]]
    if op == "LUT":
        return list(_lut_clauses(out, ins, table, k))
    raise ValueError(f"cannot encode {op}")


def topo_cells(n: Netlist) -> list[Cell]:
    c: Compiled = compiled(n)
    order = c.topo_order()
    cells = [x for x in n.cells if x.kind != "DFF"]
    return [cells[i] for i in order]


def tseitin_encode(n: Netlist) -> Cnf:
    """One variable per net, gate-wise clauses.  ``n`` must be acyclic.

    DFF outputs are treated as free variables (pseudo inputs).
    """
    cnf = Cnf()
    var: dict[str, int] = {}

    def v(net: str) -> int:
        x = var.get(net)
        if x is None:
            x = var[net] = cnf.new_var()
        return x

    for i in n.inputs:
        v(i)
    for cell in topo_cells(n):
        ins = [v(i) for i in cell.inputs]
        for cl in gate_clauses(cell.kind, v(cell.output), ins, cell.table, cell.k):
            cnf.add(cl)
    outs = {p: v(net) for p, net in n.outputs}
    cnf.annotations = {
        "inputs": {i: var[i] for i in n.inputs if i in var},
        "keys": {i: var[i] for i in n.inputs if i.startswith("key") and i in var},
        "outputs": outs,
        "nets": var,
    }
    return cnf


# --------------------------------------------------------------------------
# folding encoder

class CircuitEncoder:
    """Incremental, constant-folding, structurally hashed encoder.

    Variable 1 is reserved for constant true; ``TRUE`` and ``FALSE`` are its
    two literals.  Clauses go to ``cnf`` and, if given, straight on to
    ``sink`` (normally a solver's ``add_clause``).
    """

    TRUE = 1
    FALSE = -1

    def __init__(self, cnf: Cnf | None = None, sink=None, strash: bool = True):
        self.cnf = cnf if cnf is not None else Cnf()
        self.sink = sink
        self.strash = strash
        self._table: dict[tuple, int] = {}
        if self.cnf.num_vars == 0:
            self.cnf.new_var()
            self._emit([self.TRUE])

    def _emit(self, clause: list[int]) -> None:
        self.cnf.add(clause)
        if self.sink is not None:
            self.sink(clause)

    def new_var(self) -> int:
        return self.cnf.new_var()

    def const(self, b: bool | int) -> int:
        return self.TRUE if b else self.FALSE

    def is_const(self, lit: int) -> bool:
        return abs(lit) == 1

    def _lookup(self, key: tuple):
        if self.strash:
            return self._table.get(key)
        return None

    def _store(self, key: tuple, lit: int) -> None:
        if self.strash:
            self._table[key] = lit

    # -- gates on literals

    def AND(self, a: int, b: int) -> int:
        T, F = self.TRUE, self.FALSE
        if a == F or b == F or a == -b:
            return F
        if a == T:
            return b
        if b == T or a == b:
            return a
        if a > b:
            a, b = b, a
        key = ("and", a, b)
        got = self._lookup(key)
        if got is not None:
            return got
        o = self.new_var()
        self._emit([-o, a])
        self._emit([-o, b])
        self._emit([o, -a, -b])
        self._store(key, o)
        return o

    def OR(self, a: int, b: int) -> int:
        return -self.AND(-a, -b)

    def XOR(self, a: int, b: int) -> int:
        T, F = self.TRUE, self.FALSE
        if a == F:
            return b
        if b == F:
            return a
        if a == T:
            return -b
        if b == T:
            return -a
        if a == b:
            return F
        if a == -b:
            return T
        # normalise polarity: xor(-a, b) = -xor(a, b)
        sign = 1
        if a < 0:
            a, sign = -a, -sign
        if b < 0:
            b, sign = -b, -sign
        if a > b:
            a, b = b, a
        key = ("xor", a, b)
        got = self._lookup(key)
        if got is None:
            got = self.new_var()
            o = got
            self._emit([-o, a, b])
            self._emit([-o, -a, -b])
            self._emit([o, -a, b])
            self._emit([o, a, -b])
            self._store(key, got)
        return sign * got

    def MUX(self, a: int, b: int, s: int) -> int:
        """s ? b : a"""
        T, F = self.TRUE, self.FALSE
        if s == T:
            return b
        if s == F or a == b:
            return a
        if s < 0:
            s, a, b = -s, b, a
        if a == F:
            return self.AND(s, b)
        if a == T:
            return self.OR(-s, b)
        if b == F:
            return self.AND(-s, a)
        if b == T:
            return self.OR(s, a)
        if a == -b:
            return self.XOR(s, a)
        if s == a or s == -b:
            return self.AND(s, b) if s == a else self.AND(-s, a)
        if s == -a or s == b:
            return self.OR(s, a) if s == b else self.OR(-s, b)
        key = ("mux", a, b, s)
        got = self._lookup(key)
        if got is not None:
            return got
        o = self.new_var()
        self._emit([s, -a, o])
        self._emit([s, a, -o])
        self._emit([-s, -b, o])
        self._emit([-s, b, -o])
        self._emit([-a, -b, o])
        self._emit([a, b, -o])
        self._store(key, o)
        return o

    def LUT(self, table: int, ins: list[int]) -> int:
        k = len(ins)
        # cofactor constant inputs away
        vars_: list[int] = []
        positions: list[int] = []
        fixed = 0
        for i, l in enumerate(ins):
            if l == self.TRUE:
                fixed |= 1 << i
            elif l != self.FALSE:
                positions.append(i)
                vars_.append(l)
        m = len(vars_)
        sub = 0
        for row in range(1 << m):
            full = fixed
            for j, p in enumerate(positions):
                if (row >> j) & 1:
                    full |= 1 << p
            if (table >> full) & 1:
                sub |= 1 << row
        if sub == 0:
            return self.FALSE
        if sub == (1 << (1 << m)) - 1:
            return self.TRUE
        if m == 1:
            return vars_[0] if sub == 0b10 else -vars_[0]
        if m == 2:
            a, b = vars_
            simple = {0b1000: lambda: self.AND(a, b), 0b1110: lambda: self.OR(a, b),
                      0b0110: lambda: self.XOR(a, b), 0b1001: lambda: -self.XOR(a, b),
                      0b0001: lambda: self.AND(-a, -b), 0b0111: lambda: -self.AND(a, b),
                      0b0010: lambda: self.AND(a, -b), 0b0100: lambda: self.AND(-a, b),
                      0b1011: lambda: self.OR(a, -b), 0b1101: lambda: self.OR(-a, b)}
            if sub in simple:
                return simple[sub]()
        # Shannon split on the last variable keeps everything in gate form
        hi_var = vars_[-1]
        half = 1 << (m - 1)
        lo_t = hi_t = 0
        for row in range(1 << m):
            bit = (sub >> row) & 1
            r = row & (half - 1)
            if row & half:
                hi_t |= bit << r
            else:
                lo_t |= bit << r
        lo = self.LUT(lo_t, vars_[:-1])
        hi = self.LUT(hi_t, vars_[:-1])
        return self.MUX(lo, hi, hi_var)

    def gate(self, kind: str, ins: list[int], table: int = 0) -> int:
        if kind == "CONST0":
            return self.FALSE
        if kind == "CONST1":
            return self.TRUE
        if kind in ("BUF", "INPUT_BUF", "OUTPUT_BUF"):
            return ins[0]
        if kind == "NOT":
            return -ins[0]
        if kind == "AND2":
            return self.AND(*ins)
        if kind == "OR2":
            return self.OR(*ins)
        if kind == "XOR2":
            return self.XOR(*ins)
        if kind == "MUX2":
            return self.MUX(*ins)
        if kind == "LUT":
            return self.LUT(table, list(ins))
        raise ValueError(f"cannot encode {kind}")

    def encode(self, n: Netlist, assign: dict[str, int], order: list[Cell] | None = None
               ) -> dict[str, int]:
        """Encode one copy of ``n``.  ``assign`` maps every input net (and DFF
        output, if any) to a literal; returns literals for all nets."""
        lits = dict(assign)
        for cell in order if order is not None else topo_cells(n):
            lits[cell.output] = self.gate(cell.kind, [lits[i] for i in cell.inputs], cell.table)
        return lits

    def or_many(self, lits: list[int]) -> int:
        acc = self.FALSE
        for l in lits:
            acc = self.OR(acc, l)
        return acc

    def assert_lit(self, lit: int) -> bool:
        """Force ``lit`` true; returns False if that is a contradiction."""
        if lit == self.TRUE:
            return True
        if lit == self.FALSE:
            return False
        self._emit([lit])
        return True


