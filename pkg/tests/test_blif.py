import random

import pytest
from hypothesis import given, settings, strategies as st

from redact.blif import cover_to_table, parse_blif, write_blif
from redact.errors import ParseError
from redact.sim import exhaustive_inputs, simulate_lanes

from conftest import builtin


def one(text):
    n = parse_blif(".model t\n" + text + ".end\n")
    (c,) = n.cells
    return c


def test_and_cover():
    c = one(".inputs a b\n.outputs o\n.names a b o\n11 1\n")
    assert (c.kind, c.k, c.table) == ("LUT", 2, 0b1000)


def test_identity_cover():
    c = one(".inputs a\n.outputs o\n.names a o\n1 1\n")
    assert (c.k, c.table) == (1, 0b10)


def test_off_set_and_dont_care():
    c = one(".inputs a b\n.outputs o\n.names a b o\n0- 0\n")
    # output is 0 whenever a=0, so the ON set is {a=1}
    assert c.table == 0b1010


def test_adder2_interface():
    n = builtin("adder2")
    assert len(n.data_inputs) == 4 and len(n.outputs) == 3


def test_builtins_compute_arithmetic():
    for name, op, w_out in (("adder2", lambda a, b: a + b, 3), ("mult2", lambda a, b: a * b, 4)):
        n = builtin(name)
        names = list(n.data_inputs)
        lanes, nl = exhaustive_inputs(names)
        out = simulate_lanes(n, lanes, nl, "acyclic").outputs()
        ports = [p for p, _ in n.outputs]
        for v in range(nl):
            vec = {x: (lanes[x] >> v) & 1 for x in names}
            a = vec["a0"] + 2 * vec["a1"]
            b = vec["b0"] + 2 * vec["b1"]
            assert sum(((out[p] >> v) & 1) << j for j, p in enumerate(ports)) == op(a, b)
            assert len(ports) == w_out


def test_adder1_interface():
    n = builtin("adder1")
    assert len(n.data_inputs) == 2 and len(n.outputs) == 2


@pytest.mark.parametrize("text", [
    ".inputs a\n.outputs o\n.names a o\n1 1\n0 0\n",        # mixed ON/OFF
    ".inputs a\n.outputs o\n.names a o\n11 1\n",             # row width
    ".inputs a\n.outputs o\n.names q o\n1 1\n",              # undefined
    ".inputs a\n.outputs o\n.subckt foo\n",                  # unsupported
    ".inputs a\n.outputs o\n.names a o\n1 1\n.names a o\n1 1\n",
])
def test_malformed_rejected(text):
    with pytest.raises(ParseError):
        parse_blif(".model t\n" + text + ".end\n")


def test_parse_error_carries_line():
    with pytest.raises(ParseError) as e:
        parse_blif(".model t\n.inputs a\n.outputs o\n.names q o\n1 1\n.end\n")
    assert e.value.line is not None


def test_latch_and_constants():
    n = parse_blif(".model s\n.inputs d\n.outputs q one\n.latch d q re clk 1\n"
                   ".names one\n1\n.end\n")
    kinds = sorted(c.kind for c in n.cells)
    assert "DFF" in kinds
    (ff,) = n.dffs()
    assert ff.init == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**16 - 1))
def test_write_then_parse_preserves_function(k, seed):
    rng = random.Random(seed)
    table = rng.getrandbits(1 << k)
    ins = " ".join(f"x{i}" for i in range(k))
    rows = [(format(m, f"0{k}b")[::-1], "1") for m in range(1 << k) if table >> m & 1]
    text = f".model r\n.inputs {ins}\n.outputs y\n.names {ins} y\n"
    text += "".join(f"{r} 1\n" for r, _ in rows) + ".end\n"
    n = parse_blif(text)
    assert cover_to_table(rows, k, 0) == table
    back = parse_blif(write_blif(n))
    names = list(n.data_inputs)
    lanes, nl = exhaustive_inputs(names)
    a = simulate_lanes(n, lanes, nl, "acyclic").outputs()
    b = simulate_lanes(back, lanes, nl, "acyclic").outputs()
    assert a == b
