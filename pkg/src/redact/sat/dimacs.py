"""DIMACS CNF emission and a subprocess bridge to external solvers."""

from __future__ import annotations

import os
import shlex
import shutil
import subprocess
import tempfile
import time

from ..errors import SolverMissing, SolverOutputError
from .cdcl import SAT, UNKNOWN, UNSAT, SolveResult, SolveStats

ENV_VAR = "REDACT_SAT_SOLVER"


def write_dimacs(cnf, assumptions=(), comments=()) -> str:
    """DIMACS text for ``cnf``; assumptions are appended as unit clauses."""
    units = [[a] for a in assumptions]
    lines = [f"c {c}" for c in comments]
    lines.append(f"p cnf {cnf.num_vars} {len(cnf.clauses) + len(units)}")
    for cl in cnf.clauses:
        lines.append(" ".join(map(str, cl)) + " 0")
    for cl in units:
        lines.append(f"{cl[0]} 0")
    return "\n".join(lines) + "\n"


def read_dimacs(text: str):
    """Parse DIMACS CNF text into a :class:`~redact.attack.tseitin.Cnf`."""
    from ..attack.tseitin import Cnf

    cnf = Cnf()
    declared = None
    cur: list[int] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise SolverOutputError(f"bad problem line: {line!r}", lineno)
            cnf.num_vars = int(parts[2])
            declared = int(parts[3])
            continue
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                cnf.clauses.append(cur)
                cur = []
            else:
                cur.append(lit)
    if cur:
        cnf.clauses.append(cur)
    if declared is not None and declared != len(cnf.clauses):
        raise SolverOutputError(f"header declares {declared} clauses, found {len(cnf.clauses)}")
    return cnf


def parse_solver_output(text: str, num_vars: int | None = None) -> SolveResult:
    """Parse SAT-competition output (``s`` status line plus ``v`` model lines)."""
    status = None
    model: dict[int, bool] = {}
    terminated = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("s "):
            word = line[2:].strip()
            if word == "SATISFIABLE":
                status = SAT
            elif word == "UNSATISFIABLE":
                status = UNSAT
            elif word == "UNKNOWN":
                status = UNKNOWN
            else:
                raise SolverOutputError(f"unknown status {word!r}", lineno)
        elif line.startswith("v"):
            for tok in line[1:].split():
                try:
                    lit = int(tok)
                except ValueError:
                    raise SolverOutputError(f"bad literal {tok!r}", lineno) from None
                if lit == 0:
                    terminated = True
                    continue
                if terminated:
                    raise SolverOutputError("literal after terminating 0", lineno)
                model[abs(lit)] = lit > 0
    if status is None:
        raise SolverOutputError("no status line in solver output")
    if status != SAT:
        return SolveResult(status)
    if not terminated:
        raise SolverOutputError("model not terminated by 0 (truncated v line?)")
    if num_vars is not None:
        missing = [v for v in range(1, num_vars + 1) if v not in model]
        if missing:
            raise SolverOutputError(f"model misses {len(missing)} variables, e.g. {missing[:3]}")
    return SolveResult(SAT, model)


def external_command(cmd: str | None = None) -> list[str]:
    cmd = cmd or os.environ.get(ENV_VAR)
    if not cmd:
        raise SolverMissing(f"no external solver configured (set {ENV_VAR})")
    argv = shlex.split(cmd)
    if shutil.which(argv[0]) is None and not os.path.exists(argv[0]):
        raise SolverMissing(f"external solver {argv[0]!r} not found")
    return argv


def solve_external(cnf, assumptions=(), cmd: str | None = None,
                   timeout: float | None = None) -> SolveResult:
    """Run an external solver on ``cnf`` and verify any returned model."""
    argv = external_command(cmd)
    t0 = time.monotonic()
    with tempfile.TemporaryDirectory(prefix="redact-sat-") as tmp:
        path = os.path.join(tmp, "instance.cnf")
        with open(path, "w") as fh:
            fh.write(write_dimacs(cnf, assumptions))
        try:
            proc = subprocess.run(argv + [path], capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired:
            return SolveResult(UNKNOWN, None, SolveStats(time=time.monotonic() - t0))
    res = parse_solver_output(proc.stdout, cnf.num_vars)
    res.stats.time = time.monotonic() - t0
    if res.model is not None:
        for lits in list(cnf.clauses) + [[a] for a in assumptions]:
            if not any(res.model.get(abs(l), False) == (l > 0) for l in lits):
                raise SolverOutputError(f"external model violates clause {lits}")
    return res
