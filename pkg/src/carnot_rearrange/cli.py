"""Command-line front end.

Subcommands: ``rearrange``, ``verify``, ``constants``, ``sweep``, ``validate``.
Exit codes: 0 all checks pass, 1 a check failed (or structure validation
aborted the run), 2 usage or configuration error, 3 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import BUNDLED, ExperimentConfig, bundled_config, load_config
from .errors import InputError, NumericalError, StructureError
from .gauges import get_gauge, validate_gauge
from .groups import corrupted_group, get_group, validate_group
from .horizontal import coarea_check, perimeter_sweep
from .io import atomic_write_text, write_field_binary, write_perimeter_csv, write_profile_csv
from .rearrange import rearrange_field
from .reports import format_table, reports_to_json
from .suite import build_fields, run_suite
from .verify import (
    check_equimeasurability,
    constants_for,
    constants_reports,
    default_nodes,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

# config used when only --group is given
GROUP_DEFAULTS = {
    "euclidean1": "euclidean-smoke",
    "euclidean2": "euclidean-plane",
    "heisenberg1": "heisenberg-full",
}
DEFAULT_OUT = "results"


def _base_config(args) -> ExperimentConfig:
    if args.config:
        return load_config(args.config)
    if not args.group:
        raise InputError("give --config PATH or --group ID")
    if args.group in GROUP_DEFAULTS:
        return bundled_config(GROUP_DEFAULTS[args.group])
    return ExperimentConfig(group=args.group)


def resolve_config(args) -> ExperimentConfig:
    """Bundled or file config with command-line overrides applied."""
    cfg = _base_config(args)
    over = {}
    if args.group and args.group != cfg.group:
        over["group"] = args.group
    if args.gauge:
        over["gauges"] = list(args.gauge)
    if args.seed is not None:
        over["seed"] = args.seed
    if args.resolution is not None:
        over["resolution"] = args.resolution
    if args.levels is not None:
        over["levels"] = args.levels
    if args.out is not None:
        over["out"] = args.out
    if getattr(args, "field", None):
        over["fields"] = [{"builder": name} for name in args.field]
    if getattr(args, "input", None):
        over["fields"] = [{"path": p} for p in args.input]
    if over:
        d = cfg.to_dict()
        d.update(over)
        cfg = ExperimentConfig(**d)
    return cfg


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(args, text_table: str, payload: str) -> None:
    print(payload if args.json else text_table)


# --- subcommands --------------------------------------------------------------

PERIMETER_LEVELS = 16


def cmd_rearrange(args) -> int:
    """Write u* (binary), its profile (CSV) and the equimeasurability report per field and gauge.

    Each field also gets ``<field>.perimeters.csv``: ``P_h({u > t})`` at
    ``PERIMETER_LEVELS`` thresholds spread over ``[0, max u)``.
    """
    cfg = resolve_config(args)
    g = get_group(cfg.group)
    out = _out_dir(cfg)
    h = cfg.config_hash()
    reports = []
    for label, _, u in build_fields(cfg, g):
        top = float(u.values.max())
        ts = np.linspace(0.0, top, PERIMETER_LEVELS, endpoint=False) if top > 0 else np.zeros(0)
        write_perimeter_csv(ts, perimeter_sweep(u, ts, g), out / f"{label}.perimeters.csv",
                            config_hash=h)
        for gid in cfg.gauges:
            gauge = get_gauge(gid, g)
            ustar, prof = rearrange_field(u, gauge, levels=cfg.levels)
            stem = f"{label}__{gid}"
            write_field_binary(ustar, out / f"{stem}.ustar.bin", config_hash=h)
            write_profile_csv(prof, out / f"{stem}.profile.csv", config_hash=h)
            reps = check_equimeasurability(u, gauge, levels=cfg.levels, rearranged=(ustar, prof),
                                           tolerance=cfg.tolerance("equimeasurability"),
                                           label=f"{label}/")
            atomic_write_text(out / f"{stem}.equimeasurability.json",
                              reports_to_json(reps, config_hash=h))
            reports += reps
    _emit(args, format_table(reports), reports_to_json(reports, config_hash=h))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_verify(args) -> int:
    cfg = resolve_config(args)
    if args.workers:
        cfg.workers = args.workers
    result = run_suite(cfg)
    payload = result.to_json()
    atomic_write_text(_out_dir(cfg) / "report.json", payload)
    table = format_table(result.reports)
    if result.warnings:
        table += "\n" + "\n".join(f"warning: {w}" for w in result.warnings)
    table += f"\n{len(result.reports) - len(result.failures)}/{len(result.reports)} passed"
    _emit(args, table, payload)
    return EXIT_OK if result.passed else EXIT_FAIL


def cmd_constants(args) -> int:
    cfg = resolve_config(args)
    g = get_group(cfg.group)
    opts = cfg.constants
    records, reports = {}, []
    for gid in cfg.gauges:
        rec = constants_for(g, get_gauge(gid, g), nodes=opts.get("nodes"), seed=cfg.seed,
                            refine=opts.get("refine", 1.5),
                            sigma_samples=int(opts.get("sigma_samples", 200_000)))
        records[gid] = rec.to_dict()
        reports += constants_reports(rec, tolerance=cfg.tolerance("constants"),
                                     sigma_tolerance=cfg.tolerance("polar"))
    payload = json.dumps({"config_hash": cfg.config_hash(), "group": cfg.group,
                          "seed": cfg.seed, "constants": records}, sort_keys=True, indent=2)
    atomic_write_text(_out_dir(cfg) / "constants.json", payload)
    table = "\n".join(
        f"{gid}: C0={r['C0']:.6g} Ciso_emp={r['Ciso_emp']:.6g} Cper_bound={r['Cper_bound']:.6g} "
        f"sigmaB1={r['sigmaB1']:.6g} PhB1={r['PhB1']:.6g} Csym={r['Csym']:.6g} "
        f"witness={r['witness']}" for gid, r in records.items())
    _emit(args, table + "\n" + format_table(reports), payload)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


SWEEP_COLUMNS = ["field", "axis", "value", "h", "K", "band_steps",
                 "equimeasurability_gap", "coarea_gap"]


def _gap(lhs: float, rhs: float) -> float:
    if rhs == 0.0:
        return abs(lhs)
    return abs(lhs - rhs) / abs(rhs)


def sweep_rows(cfg: ExperimentConfig, axis: str, steps: int = 4) -> list[dict]:
    """Convergence table along one discretisation axis for every configured field.

    ``h``: nodes per axis doubled ``steps - 1`` times (spacing halved), ending
    at the configured resolution, with the threshold count refined alongside
    (node-sampled measures make the equimeasurability gap a function of K
    once h is fixed); ``K``: threshold levels and coarea slices doubled from
    64, the coarea band held at a fixed value-space width; ``eps``: coarea band width in slice steps, 1, 2, 4, ...
    """
    if axis not in ("h", "K", "eps"):
        raise InputError(f"sweep axis must be one of h, K, eps; got {axis!r}")
    if steps < 2:
        raise InputError("sweep needs at least 2 steps")
    g = get_group(cfg.group)
    gauge = get_gauge(cfg.gauges[0], g)
    top_nodes = int(cfg.resolutions[0]) if cfg.resolutions and cfg.resolutions[0] >= 1 else (
        default_nodes(g))
    rows = []
    for spec in cfg.fields:
        sub = dataclasses.replace(cfg, fields=[spec], resolution=None)
        for k in range(steps):
            nodes, K, band = top_nodes, cfg.levels, 4.0
            if axis == "h":
                nodes = max(8, top_nodes >> (steps - 1 - k))
                K = max(16, cfg.levels >> (steps - 1 - k))
                value = nodes
            elif axis == "K":
                # fixed band width in value units, so only the quadrature refines
                K = 64 << k
                band = 4.0 * K / 64
                value = K
            else:
                band = float(1 << k)
                value = band
            sub.resolution = nodes
            (label, _, u), = build_fields(sub, g)
            eq = check_equimeasurability(u, gauge, levels=K)
            co = coarea_check(u, g, K=K if axis == "K" else 64, band_steps=band)
            rows.append({
                "field": label, "axis": axis, "value": value,
                "h": float(np.max(u.spacing)), "K": K, "band_steps": band,
                "equimeasurability_gap": max(_gap(r.lhs, r.rhs) for r in eq),
                "coarea_gap": _gap(co.lhs, co.rhs),
            })
    return rows


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    rows = sweep_rows(cfg, args.axis, args.steps)
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg.config_hash()}\n")
    writer = csv.DictWriter(buf, SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
    atomic_write_text(_out_dir(cfg) / f"sweep_{args.axis}.csv", buf.getvalue())
    _emit(args, buf.getvalue().rstrip(), json.dumps(rows, indent=2))
    return EXIT_OK


def cmd_validate(args) -> int:
    """Group and gauge self-tests (structure failure exits 1)."""
    cfg = resolve_config(args)
    base = get_group(cfg.group)
    g = corrupted_group(base) if (cfg.corrupt_group or args.corrupt) else base
    reports = [validate_group(g, seed=cfg.seed)]
    for gid in cfg.gauges:
        reports.append(validate_gauge(get_gauge(gid, base), seed=cfg.seed))
    _emit(args, format_table(reports), reports_to_json(reports, config_hash=cfg.config_hash()))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


# --- argument parsing -----------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH",
                   help=f"YAML/JSON config file or bundled name ({', '.join(BUNDLED)})")
    p.add_argument("--group", metavar="ID", help="group id (euclidean1, euclidean2, heisenberg1)")
    p.add_argument("--gauge", metavar="ID", action="append",
                   help="gauge id; repeat for several (replaces the config's list)")
    p.add_argument("--out", metavar="DIR", help=f"output directory (default {DEFAULT_OUT}/)")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--resolution", type=float, metavar="H",
                   help="nodes per axis, or grid spacing if below 1")
    p.add_argument("--levels", type=int, metavar="K", help="threshold count")
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carnot-rearrange", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rearrange", help="rearrange fields; write u*, profile CSV and report")
    _common(p)
    p.add_argument("--field", action="append", metavar="BUILDER", help="analytic field builder")
    p.add_argument("--input", action="append", metavar="PATH", help="field file (.csv or binary)")
    p.set_defaults(func=cmd_rearrange)

    p = sub.add_parser("verify", help="run the verification suite")
    _common(p)
    p.add_argument("--workers", type=int, metavar="N", help="threads for independent checks")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("constants", help="estimate C0, Cper_bound, sigma(B1), Csym")
    _common(p)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("sweep", help="convergence table along h, K or eps")
    _common(p)
    p.add_argument("--axis", choices=("h", "K", "eps"), required=True)
    p.add_argument("--steps", type=int, default=4)
    p.add_argument("--field", action="append", metavar="BUILDER")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="group and gauge structure self-tests")
    _common(p)
    p.add_argument("--corrupt", action="store_true", help="perturb the group law (negative control)")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StructureError as exc:
        print(f"structure error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
