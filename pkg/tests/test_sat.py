import os
import random

import pytest
from hypothesis import given, settings, strategies as st

from redact.attack.tseitin import Cnf
from redact.errors import SolverMissing, SolverOutputError
from redact.sat.cdcl import SAT, UNKNOWN, UNSAT, Solver, luby, solve_cnf
from redact.sat.dimacs import (parse_solver_output, read_dimacs, solve_external,
                               write_dimacs)
from redact.sim import exhaustive_inputs

from conftest import pysat_command


def cnf_of(clauses, n=None):
    c = Cnf()
    c.num_vars = n or max(abs(l) for cl in clauses for l in cl)
    c.clauses = [list(cl) for cl in clauses]
    return c


def random_3cnf(rng, n, m):
    return [[v if rng.random() < 0.5 else -v for v in rng.sample(range(1, n + 1), 3)]
            for _ in range(m)]


def brute_force_sat(clauses, n) -> bool:
    """Evaluate every assignment at once, one bit lane per assignment."""
    lanes, nl = exhaustive_inputs(list(range(1, n + 1)))
    full = (1 << nl) - 1
    acc = full
    for cl in clauses:
        c = 0
        for l in cl:
            c |= lanes[l] if l > 0 else full ^ lanes[-l]
        acc &= c
        if not acc:
            return False
    return True


def test_contradiction_is_unsat():
    assert solve_cnf(cnf_of([[1], [-1]])).status == UNSAT


def test_assumption_forces_other_literal():
    r = solve_cnf(cnf_of([[1, 2]]), assumptions=[-1])
    assert r.status == SAT and r.value(2) and not r.value(1)


def test_random_3cnf_matches_brute_force():
    rng = random.Random(2024)
    sat = unsat = 0
    for _ in range(100):
        m = rng.randint(70, 100)
        cl = random_3cnf(rng, 20, m)
        want = brute_force_sat(cl, 20)
        r = solve_cnf(cnf_of(cl, 20))
        assert r.status == (SAT if want else UNSAT)
        if r.sat:
            assert cnf_of(cl, 20).evaluate(r.model)
        sat += want
        unsat += not want
    assert sat and unsat


def test_incremental_solving_with_assumptions():
    s = Solver()
    s.add_clause([1, 2])
    s.add_clause([-1, 3])
    assert s.solve([-2]).status == SAT
    assert s.solve([-2, -3]).status == UNSAT
    assert s.solve([]).status == SAT
    s.add_clause([-2])
    s.add_clause([-3])
    assert s.solve([]).status == UNSAT


def test_deterministic_under_seed():
    rng = random.Random(5)
    cl = random_3cnf(rng, 40, 160)
    a = solve_cnf(cnf_of(cl, 40), seed=3)
    b = solve_cnf(cnf_of(cl, 40), seed=3)
    assert a.status == b.status and a.model == b.model


def test_conflict_budget_returns_unknown():
    # pigeonhole 7 -> 6 needs many conflicts
    P, H = 7, 6
    v = lambda p, h: p * H + h + 1
    cl = [[v(p, h) for h in range(H)] for p in range(P)]
    cl += [[-v(p, h), -v(q, h)] for h in range(H) for p in range(P) for q in range(p + 1, P)]
    assert solve_cnf(cnf_of(cl), conflict_budget=5).status == UNKNOWN


def test_luby_prefix():
    assert [luby(i) for i in range(15)] == [1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(3, 10), st.integers(1, 45))
def test_models_satisfy_and_unsat_is_exhaustive(seed, n, m):
    cl = random_3cnf(random.Random(seed), n, m)
    r = solve_cnf(cnf_of(cl, n))
    assert r.status == (SAT if brute_force_sat(cl, n) else UNSAT)
    if r.sat:
        assert all(any(r.value(l) for l in c) for c in cl)


# dimacs ---------------------------------------------------------------------

def test_single_clause_header():
    assert write_dimacs(cnf_of([[1]])).splitlines()[0] == "p cnf 1 1"


def test_dimacs_round_trip():
    c = cnf_of([[1, -2], [2, 3], [-3]])
    back = read_dimacs(write_dimacs(c, comments=["x"]))
    assert back.clauses == c.clauses and back.num_vars == 3


def test_truncated_model_line_rejected():
    with pytest.raises(SolverOutputError):
        parse_solver_output("s SATISFIABLE\nv 1 -2 3\n")


def test_status_parsing():
    assert parse_solver_output("s UNSATISFIABLE\n").status == UNSAT
    r = parse_solver_output("c hi\ns SATISFIABLE\nv 1 -2\nv 3 0\n", 3)
    assert r.model == {1: True, 2: False, 3: True}
    with pytest.raises(SolverOutputError):
        parse_solver_output("nothing here\n")


def test_missing_solver_reported(monkeypatch):
    monkeypatch.delenv("REDACT_SAT_SOLVER", raising=False)
    with pytest.raises(SolverMissing):
        solve_external(cnf_of([[1]]))
    with pytest.raises(SolverMissing):
        solve_external(cnf_of([[1]]), cmd="/nonexistent/solver")


@pytest.mark.skipif(pysat_command() is None, reason="python-sat not installed")
def test_external_solver_agrees_on_random_instances():
    rng = random.Random(9)
    for _ in range(10):
        cl = random_3cnf(rng, 20, rng.randint(75, 95))
        c = cnf_of(cl, 20)
        assert solve_external(c, cmd=pysat_command()).status == solve_cnf(c).status
