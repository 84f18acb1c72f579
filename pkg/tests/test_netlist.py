import pytest
from hypothesis import given, settings, strategies as st

from redact.errors import NetlistFormatError
from redact.netlist import (Cell, Netlist, NetlistBuilder, check_integrity, read_netlist,
                            structural_key, sweep_dead, write_netlist)

from conftest import fabric


def and_gate():
    b = NetlistBuilder("and")
    a, c = b.add_input("a"), b.add_input("b")
    b.add_output("y", b.gate("AND2", a, c))
    return b.build()


def test_well_formed_and_has_no_violations():
    assert check_integrity(and_gate()) == []


def test_two_drivers_reported_once():
    n = and_gate()
    extra = Cell("dup", "NOT", ("a",), n.cells[0].output)
    bad = n.replace(cells=n.cells + (extra,))
    kinds = [v.kind for v in check_integrity(bad)]
    assert kinds.count("MultipleDriver") == 1


def test_empty_netlist_round_trips():
    n = Netlist("empty")
    back = read_netlist(write_netlist(n))
    assert len(back.cells) == 0 and structural_key(back) == structural_key(n)


def test_dangling_input_pin_rejected():
    n = and_gate()
    c = n.cells[0]
    broken = n.replace(cells=(Cell(c.id, c.kind, ("a", "nowhere"), c.output),))
    with pytest.raises(NetlistFormatError):
        read_netlist(write_netlist(broken))


def test_malformed_json_rejected():
    with pytest.raises(NetlistFormatError):
        read_netlist('{"name": 3}')


def test_fabric_round_trip_is_isomorphic():
    n = fabric(2, False).netlist
    back = read_netlist(write_netlist(n))
    assert structural_key(back) == structural_key(n)
    assert sorted(back.nets) == sorted(n.nets)


def test_default_3x3_fabric_is_sound():
    assert check_integrity(fabric(3, False).netlist) == []


def test_sweep_dead_drops_unobserved_logic():
    b = NetlistBuilder("d")
    a = b.add_input("a")
    b.gate("NOT", a)
    b.add_output("y", b.gate("AND2", a, a))
    n = sweep_dead(b.build())
    assert [c.kind for c in n.cells] == ["AND2"]


GATES = ("NOT", "AND2", "OR2", "XOR2", "MUX2")


@st.composite
def random_dag(draw):
    b = NetlistBuilder("r")
    nets = [b.add_input(f"x{i}") for i in range(draw(st.integers(1, 4)))]
    for _ in range(draw(st.integers(0, 12))):
        kind = draw(st.sampled_from(GATES + ("LUT",)))
        if kind == "LUT":
            k = draw(st.integers(1, 3))
            ins = [draw(st.sampled_from(nets)) for _ in range(k)]
            nets.append(b.lut(ins, draw(st.integers(0, (1 << (1 << k)) - 1))))
        else:
            arity = {"NOT": 1, "MUX2": 3}.get(kind, 2)
            nets.append(b.gate(kind, *[draw(st.sampled_from(nets)) for _ in range(arity)]))
    b.add_output("y", nets[-1])
    return b.build()


@settings(max_examples=60, deadline=None)
@given(random_dag())
def test_round_trip_preserves_structure(n):
    assert check_integrity(n) == []
    assert structural_key(read_netlist(write_netlist(n))) == structural_key(n)


def _faults():
    n = and_gate()
    c = n.cells[0]
    yield "DuplicateNet", n.replace(nets=n.nets + (n.nets[0],))
    yield "DuplicateCell", n.replace(cells=n.cells + (Cell(c.id, "NOT", ("a",), "z"),),
                                     nets=n.nets + ("z",))
    yield "UnknownKind", n.replace(cells=(Cell(c.id, "NAND2", c.inputs, c.output),))
    yield "PinCount", n.replace(cells=(Cell(c.id, "AND2", ("a",), c.output),))
    yield "DanglingPin", n.replace(cells=(Cell(c.id, "AND2", ("a", "q"), c.output),))
    yield "LutTable", n.replace(cells=(Cell(c.id, "LUT", ("a",), c.output, k=1, table=9),))
    yield "DffClock", n.replace(cells=(Cell(c.id, "DFF", ("a",), c.output, clock="clk9"),))
    yield "DffInit", n.replace(cells=(Cell(c.id, "DFF", ("a",), c.output, clock="user_clk",
                                           init=2),))
    yield "Undriven", n.replace(nets=n.nets + ("floating",))
    yield "UndeclaredNet", n.replace(cells=(Cell(c.id, "AND2", c.inputs, "ghost"),))
    yield "OutputPort", n.replace(outputs=(("y", "ghost"),))
    yield "DuplicatePort", n.replace(outputs=n.outputs * 2)


@pytest.mark.parametrize("kind,bad", list(_faults()), ids=[k for k, _ in _faults()])
def test_seeded_fault_detected(kind, bad):
    assert kind in {v.kind for v in check_integrity(bad)}
