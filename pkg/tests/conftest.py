import functools
from importlib.resources import files

import pytest

from redact.blif import parse_blif
from redact.fabric import FabricParams, generate_fabric, micro
from redact.mapper import fit_search


@functools.lru_cache(maxsize=None)
def builtin(name: str):
    return parse_blif((files("redact") / "data" / f"{name}.blif").read_text())


@functools.lru_cache(maxsize=None)
def fabric(W: int, mic: bool = True):
    p = micro(W) if mic else FabricParams(W=W)
    return generate_fabric(p)


@functools.lru_cache(maxsize=None)
def mapped(name: str, W: int, mic: bool = True, seed: int = 0):
    """(fabric, report, bitstream, implementation) for a builtin module."""
    p = micro(1) if mic else FabricParams(W=1)
    return fit_search(builtin(name), p, seed=seed, w_min=W)


@pytest.fixture(scope="session")
def micro2():
    return fabric(2)


@pytest.fixture(scope="session")
def adder1_w1():
    return mapped("adder1", 1)


def pysat_command():
    """DIMACS command line for the PySAT reference solver, or None."""
    import sys
    from pathlib import Path
    try:
        import pysat  # noqa: F401
    except ImportError:
        return None
    return f"{sys.executable} {Path(__file__).with_name('pysat_dimacs.py')}"


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
