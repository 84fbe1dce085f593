"""End-to-end verification runs driven by an :class:`ExperimentConfig`.

Checks are grouped into independent tasks (one per gauge, one per field and
gauge pair).  Tasks may run on a thread pool, but their reports are merged in
task order, so the JSON bundle does not depend on scheduling.  Nothing
time-dependent is written into it.
"""
from __future__ import annotations

import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .config import ExperimentConfig
from .errors import InputError, StructureError
from .fields import GridField, build_field, builder_support, padded_box
from .gauges import CARNOT, Gauge, get_gauge, validate_gauge
from .groups import GroupSpec, corrupted_group, get_group, validate_group
from .horizontal import (
    coarea_check,
    perimeter_homogeneity_check,
    sphere_quadrature,
    sphere_weight_integral,
)
from .io import read_field
from .rearrange import rearrange_field
from .reports import VerificationReport, all_passed, reports_to_json
from .verify import (
    ConstantsRecord,
    check_equimeasurability,
    check_fixed_point,
    check_perimeter_quasimonotone,
    constants_for,
    constants_reports,
    default_nodes,
    energy_carnot_p,
    energy_p1,
    energy_weighted_p,
)

HOMOGENEITY_RADII = (1.0, 1.5, 2.0)
SPHERE_RADII = (1.0, 2.0)
COAREA_SLICES = 64

INEQUALITY_CHECKS = ("quasimonotone", "energy_p1", "energy_weighted", "energy_carnot")


@dataclass
class SuiteResult:
    config: ExperimentConfig
    reports: list[VerificationReport]
    constants: dict[str, ConstantsRecord] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all_passed(self.reports)

    @property
    def failures(self) -> list[VerificationReport]:
        return [r for r in self.reports if not r.passed]

    def to_json(self) -> str:
        return reports_to_json(
            self.reports, config_hash=self.config.config_hash(), group=self.config.group,
            gauges=self.config.gauges, seed=self.config.seed, passed=self.passed,
            counts={"total": len(self.reports), "failed": len(self.failures)},
            constants={k: v.to_dict() for k, v in self.constants.items()},
            warnings=self.warnings)


def _is_carnot(gauge: Gauge) -> bool:
    return gauge.smoothness_tag == CARNOT or gauge.group.Q == gauge.group.n


def grid_shape_for(support, n: int, resolution: float | None, nodes: int):
    """Box and node counts: ``resolution >= 1`` is nodes per axis, ``< 1`` a spacing."""
    box = padded_box(support)
    if resolution is None:
        return box, (nodes,) * n
    if resolution >= 1:
        return box, (int(resolution),) * n
    return box, tuple(int(math.ceil((b - a) / resolution)) + 1 for a, b in box)


def build_fields(cfg: ExperimentConfig, g: GroupSpec):
    """``[(label, spec, field)]`` for every configured field and resolution."""
    out = []
    resolutions = cfg.resolutions or [None]
    for spec in cfg.fields:
        if spec.path is not None:
            out.append((spec.label, spec, read_field(spec.path, group=g)))
            continue
        gauge = get_gauge(spec.gauge or cfg.gauges[0], g)
        _, support = builder_support(spec.builder, g, gauge, **spec.params)
        for res in resolutions:
            box, shape = grid_shape_for(support, g.n, res, default_nodes(g))
            u = build_field(spec.builder, g, shape, gauge=gauge, box=box, **spec.params)
            label = spec.label if len(resolutions) == 1 else f"{spec.label}@{res:g}"
            out.append((label, spec, u))
    return out


def _validate(cfg: ExperimentConfig, g: GroupSpec, gauges: list[Gauge]) -> list[VerificationReport]:
    reps = [validate_group(g, seed=cfg.seed)]
    if not reps[0].passed:
        raise StructureError(f"group {g.name!r} failed structure validation: {reps[0].line()}")
    for gauge in gauges:
        rep = validate_gauge(gauge, seed=cfg.seed)
        reps.append(rep)
        if not rep.passed:
            raise StructureError(f"gauge {gauge.name!r} failed structure validation: {rep.line()}")
    return reps


def _gauge_task(cfg: ExperimentConfig, g: GroupSpec, gauge: Gauge,
                constants: ConstantsRecord | None) -> list[VerificationReport]:
    out = []
    if constants is not None and "constants" in cfg.checks:
        out += constants_reports(constants, tolerance=cfg.tolerance("constants"),
                                 sigma_tolerance=cfg.tolerance("polar"))
    if "perimeter_homogeneity" in cfg.checks:
        out.append(perimeter_homogeneity_check(g, gauge, HOMOGENEITY_RADII,
                                               nodes=min(default_nodes(g), 128),
                                               tolerance=cfg.tolerance("homogeneity")))
    if "sphere_weight" in cfg.checks:
        quad = sphere_quadrature(gauge, seed=cfg.seed)
        for R in SPHERE_RADII:
            out.append(sphere_weight_integral(gauge, R, g, nodes=min(default_nodes(g), 128),
                                              quad=quad, tolerance=cfg.tolerance("sphere_weight")))
    return out


def _field_task(cfg: ExperimentConfig, g: GroupSpec, label: str, spec, u: GridField,
                gauge: Gauge, constants: ConstantsRecord | None,
                first_gauge: bool) -> list[VerificationReport]:
    checks = set(cfg.checks)
    tag = f"{label}/"
    tol = cfg.tolerance("inequality")
    out = []
    if first_gauge and "coarea" in checks:
        out.append(coarea_check(u, g, K=COAREA_SLICES, tolerance=cfg.tolerance("coarea"),
                                label=label))
    rr = rearrange_field(u, gauge, levels=cfg.levels)
    if "equimeasurability" in checks:
        out += check_equimeasurability(u, gauge, levels=cfg.levels, rearranged=rr,
                                       tolerance=cfg.tolerance("equimeasurability"), label=tag)
    field_gauge = spec.gauge or cfg.gauges[0]
    if "fixed_point" in checks and spec.radial and field_gauge == gauge.name:
        out.append(check_fixed_point(u, gauge, levels=cfg.levels, label=tag))
    if "quasimonotone" in checks:
        out += check_perimeter_quasimonotone(u, g, gauge, constants=constants, levels=cfg.levels,
                                             tolerance=tol, label=tag)
    if "energy_p1" in checks:
        out.append(energy_p1(u, g, gauge, constants, levels=cfg.levels, tolerance=tol,
                             rearranged=rr, label=tag))
    for p in cfg.p_values:
        if "energy_weighted" in checks:
            out.append(energy_weighted_p(u, g, gauge, p, constants, levels=cfg.levels,
                                         tolerance=tol, rearranged=rr, label=tag))
        if "energy_carnot" in checks and _is_carnot(gauge):
            out.append(energy_carnot_p(u, g, p, constants, levels=cfg.levels, tolerance=tol,
                                       rearranged=rr, label=tag))
    return out


def run_suite(cfg: ExperimentConfig) -> SuiteResult:
    """Run every requested check and return the merged, ordered reports.

    Raises :class:`StructureError` when the group or a gauge fails its
    structure self-test (always run first) and :class:`InputError` for bad ids
    or files.  Numerical warnings are collected, never raised.
    """
    base = get_group(cfg.group)
    g = corrupted_group(base) if cfg.corrupt_group else base
    gauges = [get_gauge(gid, base) for gid in cfg.gauges]
    reports = _validate(cfg, g, gauges)
    if "validate" not in cfg.checks:
        reports = []
    fields = build_fields(cfg, g)
    if not fields and set(cfg.checks) & {"equimeasurability", "fixed_point", "coarea",
                                         *INEQUALITY_CHECKS}:
        raise InputError("config.fields: the requested checks need at least one field")

    constants: dict[str, ConstantsRecord] = {}
    if "constants" in cfg.checks or (fields and set(cfg.checks) & set(INEQUALITY_CHECKS)):
        opts = cfg.constants
        for gauge in gauges:
            constants[gauge.name] = constants_for(
                base, gauge, nodes=opts.get("nodes"), seed=cfg.seed,
                refine=opts.get("refine", 1.5),
                sigma_samples=int(opts.get("sigma_samples", 200_000)))
    tasks: list[Callable[[], list[VerificationReport]]] = []
    for gauge in gauges:
        tasks.append(lambda gauge=gauge: _gauge_task(cfg, g, gauge, constants.get(gauge.name)))
    for label, spec, u in fields:
        for i, gauge in enumerate(gauges):
            rec = constants.get(gauge.name)
            tasks.append(lambda label=label, spec=spec, u=u, gauge=gauge, rec=rec, first=(i == 0):
                         _field_task(cfg, g, label, spec, u, gauge, rec, first))
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(lambda task: task(), tasks))
    else:
        chunks = [task() for task in tasks]
    for chunk in chunks:
        reports.extend(chunk)

    warnings = []
    for rec in constants.values():
        warnings += [f"{rec.group}/{rec.gauge}: {w}" for w in rec.warnings]
    for rep in reports:
        if "warning" in rep.meta:
            warnings.append(f"{rep.claim_id}: {rep.meta['warning']}")
    return SuiteResult(cfg, reports, constants, warnings)
