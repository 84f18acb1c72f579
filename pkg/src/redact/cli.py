"""Command-line front end: ``redact <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import re
import sys
import time
from dataclasses import replace
from importlib.resources import files
from pathlib import Path

from .attack.keys import expose_keys
from .attack.loops import find_feedback_set, unroll
from .attack.satattack import (INCONSISTENT, KEY_FOUND, TIMEOUT, AttackStats,
                               attack_fabric, category_attack, known_subset,
                               stats_csv, sweep_known_bits)
from .attack.tseitin import tseitin_encode
from .blif import parse_blif
from .errors import ParseError, RedactError
from .fabric import (CATEGORIES, Bitstream, Fabric, FabricParams, bit_categories,
                     bitmap_sidecar, generate_fabric, load_bitstream, read_fabric,
                     write_fabric)
from .mapper import fit_search, tech_map
from .netlist import Netlist, read_netlist, write_netlist
from .sim import exhaustive_inputs, lane_bit, simulate_lanes

log = logging.getLogger("redact")

EXIT_OK = 0
EXIT_TIMEOUT = 5
BUILTIN_MODULES = ("adder1", "adder2", "mult2")


def derive_seed(seed: int, stage: str) -> int:
    """Per-stage sub-seed, stable across platforms and Python versions."""
    h = hashlib.sha256(f"{seed}:{stage}".encode()).digest()
    return int.from_bytes(h[:4], "big")


def parse_duration(text: str) -> float:
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+)\s*(ms|s|m|h)?\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"bad duration {text!r} (try 30s, 5m, 500ms)")
    scale = {"ms": 1e-3, "s": 1, "m": 60, "h": 3600, None: 1}[m.group(2)]
    return float(m.group(1)) * scale


# --------------------------------------------------------------------------
# io helpers

def load_module(spec: str) -> Netlist:
    """A BLIF path, a netlist JSON path or the name of a bundled module."""
    if spec in BUILTIN_MODULES and not os.path.exists(spec):
        return parse_blif((files("redact") / "data" / f"{spec}.blif").read_text())
    text = Path(spec).read_text()
    if spec.endswith(".json"):
        return read_netlist(text)
    return parse_blif(text)


def load_fabric(path: str) -> Fabric:
    f = read_fabric(Path(path).read_text())
    return f


def load_bits(path: str) -> Bitstream:
    b, _ = Bitstream.from_text(Path(path).read_text())
    return b


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def arch_args(ap: argparse.ArgumentParser) -> None:
    g = ap.add_argument_group("architecture")
    g.add_argument("--micro", action="store_true",
                   help="micro architecture (N=2, K=2, Wch=4, no FF bypass)")
    g.add_argument("--W", type=int, default=None, help="fabric width (CLBs per side)")
    g.add_argument("--N", type=int, default=None, help="LUTs per CLB")
    g.add_argument("--K", type=int, default=None, help="LUT inputs")
    g.add_argument("--Wch", type=int, default=None, help="tracks per channel")
    g.add_argument("--pads", type=int, default=None, help="pads per I/O tile")
    g.add_argument("--no-ff-bypass", action="store_true", help="CLBs without flip-flops")


def params_from(args, W: int | None = None) -> FabricParams:
    base = FabricParams(N=2, K=2, Wch=4, ff_bypass=False) if args.micro else FabricParams()
    over = {}
    for attr, key in (("W", "W"), ("N", "N"), ("K", "K"), ("Wch", "Wch"),
                      ("pads", "pads_per_io_tile")):
        v = getattr(args, attr, None)
        if v is not None:
            over[key] = v
    if W is not None:
        over["W"] = W
    if getattr(args, "no_ff_bypass", False):
        over["ff_bypass"] = False
    return replace(base, **over)


def attack_args(ap: argparse.ArgumentParser) -> None:
    g = ap.add_argument_group("attack")
    g.add_argument("--timeout", type=parse_duration, default=None, help="wall-clock budget")
    g.add_argument("--solver", choices=("internal", "external", "both"), default="internal")
    g.add_argument("--solver-cmd", default=None,
                   help="external DIMACS solver (default: $REDACT_SAT_SOLVER)")
    g.add_argument("--frame0", choices=("zero", "free"), default="zero",
                   help="values read by the first unrolled frame")
    g.add_argument("--frames", type=_frames, default="deepen",
                   help="unrolling depth: deepen, full, fixpoint or a frame count")
    g.add_argument("--acyclic-keys", action="store_true",
                   help="restrict keys to configurations without combinational loops")
    g.add_argument("--max-iterations", type=int, default=None)
    g.add_argument("--max-clauses", type=int, default=None)


def _frames(text: str):
    if text in ("deepen", "full", "fixpoint"):
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad frame policy {text!r}") from None


def attack_kw(args) -> dict:
    return {"timeout": args.timeout, "solver": args.solver, "solver_cmd": args.solver_cmd,
            "frame0": args.frame0, "frames": args.frames, "acyclic_keys": args.acyclic_keys,
            "max_iterations": args.max_iterations, "max_clauses": args.max_clauses}


# --------------------------------------------------------------------------
# subcommands

def cmd_gen_fabric(args) -> int:
    p = params_from(args)
    f = generate_fabric(p)
    out = Path(args.output)
    write_text(out, write_fabric(f))
    if args.bitmap:
        write_text(Path(args.bitmap), bitmap_sidecar(f))
    cats = bit_categories(f)
    print(f"{f.netlist.name}: {f.num_bits} config bits "
          + " ".join(f"{c}={cats[c]}" for c in CATEGORIES))
    return EXIT_OK


def cmd_map(args) -> int:
    n = load_module(args.module)
    d = tech_map(n, args.K)
    if args.output:
        write_text(Path(args.output), write_netlist(d.lut_netlist))
    ins, outs = d.io_signature
    print(f"{n.name}: {len(d.luts)} LUTs (K={args.K}), {len(d.dffs)} DFFs, "
          f"{ins} inputs, {outs} outputs")
    return EXIT_OK


def cmd_redact(args) -> int:
    n = load_module(args.module)
    p = params_from(args)
    f, rep, b, _ = fit_search(n, p, seed=derive_seed(args.seed, "place"),
                              w_max=args.w_max, w_min=args.w_min or args.W)
    out = Path(args.output)
    stem = n.name
    write_text(out / f"{stem}.fabric.json", write_fabric(f))
    write_text(out / f"{stem}.bits", b.to_text(f.params))
    write_text(out / f"{stem}.bitmap.json", bitmap_sidecar(f))
    write_text(out / f"{stem}.pins.json", json.dumps(rep.pins_map, indent=1, sort_keys=True) + "\n")
    write_text(out / f"{stem}.report.json", rep.to_json())
    write_text(out / f"{stem}.report.csv", rep.to_csv())
    print(rep.to_csv(), end="")
    return EXIT_OK


def _vectors(names: list[str], assign: list[str] | None) -> tuple[dict[str, int], int]:
    if not assign:
        if len(names) > 16:
            raise RedactError(f"{len(names)} inputs: give --set values instead of exhaustive")
        return exhaustive_inputs(names)
    vec = {nm: 0 for nm in names}
    for item in assign:
        k, _, v = item.partition("=")
        if k not in vec or v not in ("0", "1"):
            raise RedactError(f"bad assignment {item!r}")
        vec[k] = int(v)
    return vec, 1


def cmd_simulate(args) -> int:
    if args.bitstream:
        f = load_fabric(args.netlist)
        n = load_bitstream(f, load_bits(args.bitstream))
        names = [i for i in n.data_inputs if i != "scan_in_head"]
        fixed = {"scan_in_head": 0}
    else:
        n = load_module(args.netlist)
        names = list(n.data_inputs)
        fixed = {}
    if args.inputs:
        keep = args.inputs.split(",")
        fixed.update({i: 0 for i in names if i not in keep})
        names = keep
    lanes, nl = _vectors(names, args.set)
    res = simulate_lanes(n, {**lanes, **fixed}, nl, args.mode)
    outs = res.outputs()
    ports = [p for p, _ in n.outputs]
    if args.outputs:
        ports = args.outputs.split(",")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(names + ports + ["stable"])
    for lane in range(nl):
        w.writerow([lane_bit(lanes[i], lane) for i in names]
                   + [lane_bit(outs[p], lane) for p in ports] + [lane_bit(res.stable, lane)])
    return EXIT_OK


def cmd_expose(args) -> int:
    f = load_fabric(args.fabric)
    kn = expose_keys(f)
    if args.output:
        write_text(Path(args.output), write_netlist(kn.netlist))
    fs = find_feedback_set(kn)
    print(f"{kn.key_size} key inputs, {len(kn.inputs)} data inputs, "
          f"{len(kn.outputs)} outputs, feedback set {len(fs)}")
    return EXIT_OK


def parse_known(spec: str | None, f: Fabric, b: Bitstream, seed: int) -> dict[int, int]:
    """``all``, ``none``, a fraction in [0, 1] or an index list like ``0-11,40``."""
    import random
    B = f.num_bits
    if spec is None or spec == "none":
        return {}
    if spec == "all":
        idx = list(range(B))
    elif re.fullmatch(r"0?\.\d+|[01](\.0*)?", spec):
        idx = known_subset(B, float(spec), random.Random(f"{seed}:known"))
    else:
        idx = []
        for part in spec.split(","):
            lo, _, hi = part.partition("-")
            try:
                a = int(lo)
                z = int(hi) if hi else a
            except ValueError:
                raise ParseError(f"bad --known-bits item {part!r}") from None
            if not 0 <= a <= z < B:
                raise ParseError(f"--known-bits range {part!r} outside 0..{B - 1}")
            idx.extend(range(a, z + 1))
    return {i: b.bits[i] for i in idx}


def _outcome_code(st: AttackStats) -> int:
    if st.outcome == KEY_FOUND:
        return EXIT_OK
    if st.outcome == TIMEOUT:
        return EXIT_TIMEOUT
    return RedactError.exit_code


def cmd_attack(args) -> int:
    f = load_fabric(args.fabric)
    b = load_bits(args.bitstream)
    kw = attack_kw(args)
    kw["seed"] = derive_seed(args.seed, "attack")
    if args.category:
        r = category_attack(f, b, args.category, circuit=args.circuit, **kw)
    else:
        known = parse_known(args.known_bits, f, b, args.seed)
        r = attack_fabric(f, b, known, circuit=args.circuit, **kw)
    st = r.stats
    text = stats_csv([st])
    if args.output:
        write_text(Path(args.output), text)
    if args.json:
        obj = json.loads(st.to_json())
        obj["key"] = "".join(map(str, r.key)) if r.key is not None else None
        write_text(Path(args.json), json.dumps(obj, indent=1, sort_keys=True) + "\n")
    sys.stdout.write(text)
    if st.outcome != KEY_FOUND:
        print(f"{st.outcome}: {st.detail}", file=sys.stderr)
    return _outcome_code(st)


# --------------------------------------------------------------------------
# campaigns

DEFAULT_SWEEP = {
    "seed": 0,
    "module": "adder1",
    "arch": {"N": 2, "K": 2, "Wch": 4, "pads_per_io_tile": 1, "ff_bypass": False},
    "ladder": [1, 2, 3],
    "ladder_attack": False,
    "sweep_W": 1,
    "fractions": [0.0, 0.25, 0.5, 0.75, 1.0],
    "trials": 2,
    "categories": True,
    "attack": {"timeout": 600, "solver": "internal", "frame0": "zero"},
}


def load_config(path: str | None) -> dict:
    cfg = json.loads(json.dumps(DEFAULT_SWEEP))
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ParseError(f"bad sweep config: {e}") from None
        unknown = set(user) - set(cfg)
        if unknown:
            raise ParseError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for k, v in user.items():
            if isinstance(v, dict) and isinstance(cfg.get(k), dict):
                cfg[k].update(v)
            else:
                cfg[k] = v
    return cfg


def _csv(rows: list[dict], fields: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _non_decreasing(xs: list[int]) -> bool:
    return all(a <= b for a, b in zip(xs, xs[1:]))


def ladder_row(f: Fabric, b: Bitstream | None, attack: dict | None, seed: int,
               circuit: str, timing: bool) -> dict:
    kn = expose_keys(f)
    fs = find_feedback_set(kn)
    un = unroll(kn, fs, frame0=(attack or {}).get("frame0", "zero"))
    cnf = tseitin_encode(un.netlist)
    row = {"W": f.params.W, "bitstream": f.num_bits, "unroll_factor": len(fs),
           "unrolled_cells": len(un.netlist.cells), "clauses": cnf.num_clauses,
           "variables": cnf.num_vars, "outcome": "", "dip_count": "", "time": ""}
    if attack is not None and b is not None:
        st = attack_fabric(f, b, circuit=circuit, seed=seed, **attack).stats
        row.update(outcome=st.outcome, dip_count=st.dip_count,
                   time=f"{st.time:.3f}" if timing else "")
    return row


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    seed = int(cfg["seed"])
    out = Path(args.output)
    module = load_module(cfg["module"])
    arch = FabricParams(**{"W": 1, **cfg["arch"]})
    atk = dict(cfg["attack"])
    timing = args.timing
    summary: dict = {"seed": seed, "module": module.name, "config": cfg}

    def fit(W: int):
        f, rep, b, _ = fit_search(module, replace(arch, W=W), seed=derive_seed(seed, "place"),
                                  w_min=W, w_max=W)
        return f, b

    ladder = []
    for W in cfg["ladder"]:
        try:
            f, b = fit(W)
        except RedactError as e:
            log.warning("ladder W=%d: %s", W, e)
            f, b = generate_fabric(replace(arch, W=W)), None
        ladder.append(ladder_row(f, b, atk if cfg["ladder_attack"] else None,
                                 derive_seed(seed, f"ladder:{W}"), module.name, timing))
    lf = ["W", "bitstream", "unroll_factor", "unrolled_cells", "clauses", "variables",
          "outcome", "dip_count", "time"]
    write_text(out / "ladder.csv", _csv(ladder, lf))
    summary["ladder"] = {
        "rows": len(ladder),
        "unroll_factor_non_decreasing": _non_decreasing([r["unroll_factor"] for r in ladder]),
        "clauses_non_decreasing": _non_decreasing([r["clauses"] for r in ladder]),
    }

    f = b = None
    if cfg["fractions"] or cfg["categories"]:
        f, b = fit(int(cfg["sweep_W"]))
    sweep_rows = []
    if cfg["fractions"]:
        for row in sweep_known_bits(f, b, cfg["fractions"], int(cfg["trials"]),
                                    seed=derive_seed(seed, "sweep"), circuit=module.name, **atk):
            d = row.result.row(timing)
            d.update(fraction=row.fraction, trial=row.trial, unknown=row.unknown)
            sweep_rows.append(d)
    sf = ["fraction", "trial", "unknown"] + list(AttackStats.CSV_FIELDS)
    write_text(out / "known_bits.csv", _csv(sweep_rows, sf))
    summary["known_bits"] = {
        "rows": len(sweep_rows),
        "key_found": sum(r["outcome"] == KEY_FOUND for r in sweep_rows),
        "timeouts": sum(r["outcome"] == TIMEOUT for r in sweep_rows),
        "inconsistent": sum(r["outcome"] == INCONSISTENT for r in sweep_rows),
    }

    cat_rows = []
    if cfg["categories"]:
        for c in CATEGORIES:
            st = category_attack(f, b, c, seed=derive_seed(seed, f"cat:{c}"),
                                 circuit=module.name, **atk).stats
            cat_rows.append(st.row(timing))
    write_text(out / "categories.csv", _csv(cat_rows, list(AttackStats.CSV_FIELDS)))
    if cat_rows:
        total = sum(int(r["key_size"]) for r in cat_rows)
        summary["categories"] = {"key_sizes": {r["category"]: r["key_size"] for r in cat_rows},
                                 "bitstream": f.num_bits, "partition_ok": total == f.num_bits}
    write_text(out / "summary.json", json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(json.dumps({k: v for k, v in summary.items() if k != "config"}, sort_keys=True))
    return EXIT_OK


def cmd_report(args) -> int:
    """Collect redaction reports and attack rows found under a directory."""
    root = Path(args.directory)
    fits = []
    for p in sorted(root.rglob("*.report.json")):
        obj = json.loads(p.read_text())
        fits.append({"module": obj["module"], "fabric": obj["fabric"],
                     "io_utilization": f"{obj['io_utilization']:.1f}",
                     "clb_utilization": f"{obj['clb_utilization']:.1f}",
                     "lut_utilization": f"{obj['lut_utilization']:.1f}",
                     "bitstream_length": obj["bitstream_length"]})
    attacks = []
    for p in sorted(root.rglob("*.csv")):
        if p.name.endswith(".report.csv"):
            continue
        with p.open() as fh:
            rd = csv.DictReader(fh)
            if rd.fieldnames and set(AttackStats.CSV_FIELDS) <= set(rd.fieldnames):
                for r in rd:
                    attacks.append({k: r[k] for k in AttackStats.CSV_FIELDS})
    text = ""
    if fits:
        text += "# utilization\n" + _csv(fits, list(fits[0]))
    if attacks:
        text += "# attacks\n" + _csv(attacks, list(AttackStats.CSV_FIELDS))
    if args.output:
        write_text(Path(args.output), text)
    sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="redact", description="eFPGA redaction workbench")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-fabric", help="generate a fabric netlist")
    arch_args(p)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--bitmap", help="also write the bit map sidecar")
    p.set_defaults(func=cmd_gen_fabric)

    p = sub.add_parser("map", help="technology-map a module onto K-LUTs")
    p.add_argument("module")
    p.add_argument("--K", type=int, default=4)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("redact", help="fit a module on the smallest fabric")
    p.add_argument("module")
    arch_args(p)
    p.add_argument("--w-max", type=int, default=12)
    p.add_argument("--w-min", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default=".")
    p.set_defaults(func=cmd_redact)

    p = sub.add_parser("simulate", help="simulate a module or a configured fabric")
    p.add_argument("netlist", help="BLIF / netlist JSON, or fabric JSON with --bitstream")
    p.add_argument("--bitstream")
    p.add_argument("--inputs", help="comma list of inputs to enumerate (others held at 0)")
    p.add_argument("--outputs", help="comma list of outputs to print")
    p.add_argument("--set", action="append", metavar="NAME=0|1",
                   help="single vector instead of exhaustive enumeration")
    p.add_argument("--mode", choices=("acyclic", "fixed_point"), default="fixed_point")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("expose", help="expose configuration bits as key inputs")
    p.add_argument("fabric")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_expose)

    p = sub.add_parser("attack", help="oracle-guided SAT attack on a configured fabric")
    p.add_argument("fabric")
    p.add_argument("bitstream")
    attack_args(p)
    p.add_argument("--known-bits", default=None,
                   help="all | none | fraction | index list (0-11,40)")
    p.add_argument("--category", choices=CATEGORIES)
    p.add_argument("--circuit", default="")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", help="CSV row")
    p.add_argument("--json", help="full stats and recovered key")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("sweep", help="fabric ladder, known-bits and category campaign")
    p.add_argument("config", nargs="?", help="JSON config (defaults for missing keys)")
    p.add_argument("-o", "--output", default="sweep")
    p.add_argument("--timing", action="store_true",
                   help="include wall-clock times (artifacts are then not reproducible)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="tabulate reports found under a directory")
    p.add_argument("directory")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RedactError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
