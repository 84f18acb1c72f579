import random

import pytest
from hypothesis import given, settings, strategies as st

from redact.errors import OscillationError
from redact.fabric import load_bitstream
from redact.netlist import NetlistBuilder
from redact.sim import (exhaustive_inputs, lane_bit, simulate, simulate_lanes,
                        simulate_sequential, vectors_to_lanes)

from conftest import mapped


def test_xor_truth_row():
    b = NetlistBuilder("x")
    b.add_output("y", b.gate("XOR2", b.add_input("a"), b.add_input("b")))
    assert simulate(b.build(), {"a": 1, "b": 0}).outputs == {"y": 1}


def test_ring_of_two_inverters_oscillates():
    b = NetlistBuilder("ring")
    b.net("p")
    q = b.gate("NOT", "p")
    b.gate("NOT", q, output="p")
    b.add_output("y", "p")
    n = b.build()
    with pytest.raises(OscillationError):
        simulate(n, {}, mode="fixed_point")
    assert not simulate(n, {}, mode="fixed_point", strict=False).stable


def test_mapped_adder2_adds():
    f, rep, bits, _ = mapped("adder2", 2, mic=False)
    cfg = load_bitstream(f, bits)
    pins = rep.pins_map
    for v in range(16):
        a, b_ = v & 3, v >> 2
        vec = {i: 0 for i in cfg.inputs}
        for j in range(2):
            vec[pins[f"a{j}"]] = (a >> j) & 1
            vec[pins[f"b{j}"]] = (b_ >> j) & 1
        out = simulate(cfg, vec, mode="fixed_point").outputs
        got = sum(out[pins[f"s{j}"]] << j for j in range(3))
        assert got == a + b_


def shift_register(stages=3):
    b = NetlistBuilder("sr")
    d = b.add_input("din")
    for i in range(stages):
        d = b.dff(d, "user_clk", output=f"q{i}")
    b.add_output("dout", d)
    return b.build()


def test_shift_register_holds_stimulus_reversed():
    n = shift_register()
    trace = simulate_sequential(n, "user_clk", [{"din": 1}, {"din": 0}, {"din": 1}])
    ids = [c.id for c in n.dffs()]
    assert tuple(trace[-1].state[i] for i in ids) == (1, 0, 1)
    trace = simulate_sequential(n, "user_clk", [{"din": 1}, {"din": 1}, {"din": 0}])
    assert tuple(trace[-1].state[i] for i in ids) == (0, 1, 1)


def test_empty_stimulus_changes_nothing():
    assert simulate_sequential(shift_register(), "user_clk", []) == []


def test_exhaustive_lanes_enumerate_every_vector():
    names = ["a", "b", "c"]
    lanes, nl = exhaustive_inputs(names)
    assert nl == 8
    seen = {tuple(lane_bit(lanes[x], v) for x in names) for v in range(nl)}
    assert len(seen) == 8
    for v in range(nl):
        assert [lane_bit(lanes[x], v) for x in names] == [(v >> i) & 1 for i in range(3)]


@st.composite
def dag(draw):
    b = NetlistBuilder("r")
    nets = [b.add_input(f"x{i}") for i in range(3)]
    for _ in range(draw(st.integers(1, 10))):
        kind = draw(st.sampled_from(("NOT", "AND2", "OR2", "XOR2", "MUX2")))
        arity = {"NOT": 1, "MUX2": 3}.get(kind, 2)
        nets.append(b.gate(kind, *[draw(st.sampled_from(nets)) for _ in range(arity)]))
    b.add_output("y", nets[-1])
    return b.build()


@settings(max_examples=50, deadline=None)
@given(dag(), st.integers(0, 7))
def test_simulation_is_pure_and_modes_agree(n, v):
    vec = {f"x{i}": (v >> i) & 1 for i in range(3)}
    a = simulate(n, vec).outputs
    assert simulate(n, vec).outputs == a
    assert simulate(n, vec, mode="fixed_point").outputs == a
    lanes = vectors_to_lanes(list(vec), [vec])
    assert simulate_lanes(n, lanes, 1, "acyclic").outputs()["y"] == a["y"]


def test_lanes_match_scalar_simulation():
    rng = random.Random(1)
    b = NetlistBuilder("m")
    xs = [b.add_input(f"x{i}") for i in range(4)]
    t = b.lut(xs, rng.getrandbits(16))
    b.add_output("y", b.gate("XOR2", t, xs[0]))
    n = b.build()
    lanes, nl = exhaustive_inputs([f"x{i}" for i in range(4)])
    res = simulate_lanes(n, lanes, nl, "acyclic").outputs()["y"]
    for v in range(nl):
        vec = {f"x{i}": (v >> i) & 1 for i in range(4)}
        assert lane_bit(res, v) == simulate(n, vec).outputs["y"]
