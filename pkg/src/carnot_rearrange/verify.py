"""Numerical checks of the rearrangement inequalities and the constants behind them.

Every check returns :class:`VerificationReport` objects.  Inequality checks
compare against a :class:`ConstantsRecord`, which is computed once per
(group, gauge, resolution) and reused so that all reports of a run share the
same constants.
"""
from __future__ import annotations

import functools
import math
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InputError
from .fields import GridField, integrate
from .gauges import Gauge, carnot_gauge, gauge_ids, get_gauge
from .groups import GroupSpec
from .horizontal import (
    SetShape,
    ball_shape,
    energy,
    horizontal_gradient,
    horizontal_perimeter,
    isoperimetric_ratio,
    local_eps,
    shape_measure_and_perimeter,
    sphere_quadrature,
)
from .rearrange import (
    RearrangementProfile,
    profile_derivative,
    rearrange_field,
    volume_function,
    volume_inverse,
)
from .reports import VerificationReport, _jsonable

DEFAULT_NODES = {1: 256, 2: 128, 3: 64}

PHIS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "s": lambda s: s,
    "s^2": lambda s: s * s,
    "min(s,1)": lambda s: np.minimum(s, 1.0),
}


def default_nodes(g: GroupSpec) -> int:
    return DEFAULT_NODES.get(g.n, 48)


# --- set families and constants ---------------------------------------------

def _box_shape(name, half):
    half = np.asarray(half, dtype=float)
    return SetShape(name, lambda p: np.max(np.abs(p) / half, axis=-1), tuple(1.5 * half))


def _ellipsoid_shape(name, semi):
    semi = np.asarray(semi, dtype=float)
    return SetShape(name, lambda p: np.sqrt(np.sum((p / semi) ** 2, axis=-1)), tuple(1.5 * semi))


def default_set_family(g: GroupSpec, gauge: Gauge) -> list[SetShape]:
    """Unit ball of ``gauge`` first, then other gauge balls, boxes and ellipsoids.

    Isoperimetric ratios are invariant under dilations and left translations,
    so origin-centred sets with one normalised semi-axis cover the shapes up
    to those symmetries.  On H^1 the vertical semi-axis ``c`` ranges over
    ``c / a^2`` from 1/16 to 2.
    """
    fam = [ball_shape(gauge, 1.0, name=f"ball[{gauge.name}]")]
    if g.Q != g.n:
        for gid in gauge_ids():
            if gid == gauge.name:
                continue
            try:
                other = get_gauge(gid, g)
            except InputError:
                continue
            fam.append(ball_shape(other, 1.0, name=f"ball[{gid}]"))
    if g.n == 1:
        fam.append(SetShape("two_intervals", lambda p: np.minimum(np.abs(p[..., 0] - 1.0),
                                                                  np.abs(p[..., 0] + 1.0)) / 0.5,
                            (2.5,)))
    elif g.Q == g.n:
        for b in (1.0, 0.5, 0.25):
            fam.append(_box_shape(f"box[b={b:g}]", (1.0, b) + (b,) * (g.n - 2)))
        for b in (0.5, 0.25):
            fam.append(_ellipsoid_shape(f"ellipsoid[b={b:g}]", (1.0, b) + (b,) * (g.n - 2)))
    else:
        for b in (1.0, 0.5):
            for c in (0.0625, 0.125, 0.25, 0.5, 1.0, 2.0):
                fam.append(_box_shape(f"box[b={b:g},c={c:g}]", (1.0, b, c)))
                fam.append(_ellipsoid_shape(f"ellipsoid[b={b:g},c={c:g}]", (1.0, b, c)))
    return fam


@dataclass
class ConstantsRecord:
    group: str
    gauge: str
    nodes: int
    C0: float
    Ciso_emp: float
    Cper_bound: float
    sigmaB1: float
    PhB1: float
    Csym: float
    ball_volume: float
    """grid measure of B_1 used in C0"""
    c1: float
    """reference measure of B_1 (closed form or quadrature)"""
    sigma_stderr: float
    witness: str
    refinement: dict = field(default_factory=dict)
    converged: bool = True
    warnings: list = field(default_factory=list)
    scan: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _scan(g, family, nodes):
    rows = []
    for shape in family:
        vol, per = shape_measure_and_perimeter(shape, g, nodes)
        rows.append({"set": shape.name, "volume": vol, "perimeter": per,
                     "ratio": isoperimetric_ratio(vol, per, g.Q)})
    return rows


def estimate_constants(g: GroupSpec, gauge: Gauge, set_family: Sequence[SetShape] | None = None,
                       nodes: int | None = None, refine: float | None = 1.5, seed: int = 0,
                       sigma_samples: int = 200_000, agreement: float = 0.05) -> ConstantsRecord:
    """C0 from the unit ball, the empirical isoperimetric maximum over ``set_family``,
    ``Cper_bound = Ciso_emp / C0`` and ``Csym = sigma(B_1) / P_h(B_1) * Cper_bound``.

    The first family member must be the unit ball of ``gauge``.  With
    ``refine`` set, the scan is repeated on ``round(refine * nodes)`` nodes per
    axis and the relative changes are stamped into ``refinement``; changes
    above ``agreement`` add an unreliable-constant warning.  The record always
    holds the base-resolution values.
    """
    family = list(set_family) if set_family is not None else default_set_family(g, gauge)
    if not family:
        raise InputError("set family is empty")
    nodes = nodes or (DEFAULT_NODES[g.n] if g.n < 3 else 64)
    rows = _scan(g, family, nodes)
    ball = rows[0]
    C0 = ball["ratio"]
    best = max(rows, key=lambda r: r["ratio"])
    Ciso = best["ratio"]
    quad = sphere_quadrature(gauge, samples=sigma_samples, seed=seed)
    V = volume_function(gauge)
    rec = ConstantsRecord(
        group=g.name, gauge=gauge.name, nodes=nodes, C0=C0, Ciso_emp=Ciso,
        Cper_bound=Ciso / C0, sigmaB1=quad.sigma, PhB1=ball["perimeter"],
        Csym=quad.sigma / ball["perimeter"] * Ciso / C0, ball_volume=ball["volume"],
        c1=V.c1, sigma_stderr=quad.stderr, witness=best["set"], scan=rows)
    if refine:
        fine = int(round(refine * nodes))
        rows_f = _scan(g, family, fine)
        C0_f = rows_f[0]["ratio"]
        Cper_f = max(r["ratio"] for r in rows_f) / C0_f
        changes = {
            "C0": abs(C0_f - C0) / C0,
            "Cper_bound": abs(Cper_f - rec.Cper_bound) / rec.Cper_bound,
            "PhB1": abs(rows_f[0]["perimeter"] - rec.PhB1) / rec.PhB1,
        }
        rec.refinement = {"nodes": fine, "C0": C0_f, "Cper_bound": Cper_f,
                          "PhB1": rows_f[0]["perimeter"], "rel_change": changes,
                          "max_rel_change": max(changes.values()), "agreement": agreement}
        if rec.refinement["max_rel_change"] > agreement:
            rec.converged = False
            rec.warnings.append(
                f"unreliable constants: refinement {nodes}->{fine} changed by "
                f"{rec.refinement['max_rel_change']:.3%}")
    return rec


@functools.lru_cache(maxsize=32)
def _cached_constants(group_name, gauge_name, nodes, seed, refine, sigma_samples):
    from .groups import get_group
    g = get_group(group_name)
    return estimate_constants(g, get_gauge(gauge_name, g), nodes=nodes, seed=seed, refine=refine,
                              sigma_samples=sigma_samples)


def constants_for(g: GroupSpec, gauge: Gauge, nodes: int | None = None, seed: int = 0,
                  refine: float | None = 1.5, sigma_samples: int = 200_000) -> ConstantsRecord:
    """Memoised :func:`estimate_constants` with the default family (registry groups only).

    Callers share the returned record; treat it as read-only.
    """
    return _cached_constants(g.name, gauge.name, nodes, seed, refine, sigma_samples)


def constants_reports(rec: ConstantsRecord, tolerance: float = 0.03,
                      sigma_tolerance: float = 0.02) -> list[VerificationReport]:
    tag = f"{rec.group}/{rec.gauge}"
    Q = round(rec.sigmaB1 / rec.c1) if rec.c1 else 0
    out = [
        VerificationReport.bound(f"constants_positive[{tag}]", float(sum(
            not (math.isfinite(v) and v > 0) for v in (rec.C0, rec.Ciso_emp, rec.Cper_bound,
                                                       rec.sigmaB1, rec.PhB1, rec.Csym))), 0.0),
        VerificationReport(f"cper_lower_bound[{tag}]", 1.0, rec.Cper_bound, tolerance=tolerance,
                           kind="inequality", meta={"Cper_bound": rec.Cper_bound}),
        VerificationReport(f"polar_consistency[{tag}]", rec.sigmaB1, Q * rec.c1,
                           tolerance=sigma_tolerance, kind="relative",
                           meta={"sigma_stderr": rec.sigma_stderr, "c1": rec.c1}),
    ]
    if rec.refinement:
        out.append(VerificationReport(f"constants_refinement[{tag}]",
                                      rec.refinement["max_rel_change"],
                                      rec.refinement["agreement"], kind="inequality",
                                      meta={"nodes": rec.nodes, **rec.refinement}))
    return out


# --- rearrangement checks ------------------------------------------------------

def _rearrange(u: GridField, gauge: Gauge, levels: int, rearranged=None):
    if rearranged is not None:
        return rearranged
    return rearrange_field(u, gauge, levels=levels)


def check_equimeasurability(u: GridField, gauge: Gauge, phis=None, levels: int = 512,
                            tolerance: float = 0.01, rearranged=None,
                            label: str = "") -> list[VerificationReport]:
    """``int phi(u*)`` against ``int phi(u)`` for each ``phi`` (relative, default 1%)."""
    phis = PHIS if phis is None else phis
    if not isinstance(phis, dict):
        phis = {getattr(f, "__name__", f"phi{i}"): f for i, f in enumerate(phis)}
    ustar, _ = _rearrange(u, gauge, levels, rearranged)
    out = []
    for name, phi in phis.items():
        lhs = integrate(ustar, phi)
        rhs = integrate(u, phi)
        out.append(VerificationReport(f"equimeasurability[{label}{gauge.name},phi={name}]",
                                      lhs, rhs, tolerance=tolerance, kind="relative",
                                      meta={"levels": levels, "shape": list(u.shape)}))
    return out


def check_fixed_point(u: GridField, gauge: Gauge, levels: int = 512,
                      label: str = "") -> VerificationReport:
    """For radial nonincreasing ``u``: ``max |u* - u| <= 2 (h + max u / K)`` on u's grid."""
    ustar, _ = rearrange_field(u, gauge, out_box=u.box, out_shape=u.shape, levels=levels)
    err = float(np.max(np.abs(ustar.values - u.values)))
    bound = 2.0 * (float(np.max(u.spacing)) + float(u.values.max()) / levels)
    return VerificationReport.bound(f"fixed_point[{label}{gauge.name}]", err, bound, levels=levels)


def _has_jumps(u: GridField, grad, fraction: float = 0.125) -> bool:
    """True if a single node step ``|(h_j d_j u)|`` exceeds ``fraction`` of the range."""
    rng = float(u.values.max() - u.values.min())
    return rng > 0 and float(np.max(local_eps(grad, 1.0))) > fraction * rng


def check_perimeter_quasimonotone(u: GridField, g: GroupSpec, gauge: Gauge, thresholds=None,
                                  constants: ConstantsRecord | None = None, levels: int = 512,
                                  tolerance: float = 0.03, count: int = 5,
                                  min_cells: float = 2.0,
                                  label: str = "") -> list[VerificationReport]:
    """``P_h(E_{u*}(t)) <= Cper_bound * P_h(E_u(t))`` at each threshold.

    ``E_{u*}(t)`` is the gauge ball of measure ``nu_u(t)``; its perimeter is
    ``PhB1 * r^(Q-1)`` with ``PhB1`` from the same constants record.  The
    perimeter of ``E_u(t)`` is the mollified estimate on u's grid.

    Default thresholds are ``max u * k / (count + 1)``, keeping those whose
    equal-measure ball reaches at least ``min_cells`` grid cells from its
    centre along every axis; smaller sets are not resolved by the estimator.
    Explicit thresholds are always checked.
    """
    constants = constants or constants_for(g, gauge)
    umax = float(u.values.max())
    V = volume_function(gauge)

    def ball_of(t):
        nu = float(np.count_nonzero(u.values > t) * u.cell_volume)
        r = float(volume_inverse(V, nu))
        cells = float(np.min(gauge.ball_extent(r) / u.spacing)) if r > 0 else 0.0
        return nu, r, cells

    skipped = []
    if thresholds is None:
        thresholds = []
        for t in umax * (np.arange(1, count + 1) / (count + 1)):
            (thresholds if ball_of(t)[2] >= min_cells else skipped).append(float(t))
    grad = horizontal_gradient(u, g)
    # the mollified estimate needs several nodes across each level set; a
    # jump gives it two samples, so jump fields use narrow scalar slices
    jumps = _has_jumps(u, grad)
    method, eps = ("coarea-slice", umax / 64) if jumps else ("mollified-bv", None)
    out = []
    for t in thresholds:
        t = float(t)
        if not 0 <= t < umax:
            raise InputError(f"threshold {t} not in [0, max u)")
        nu, r, cells = ball_of(t)
        pstar = constants.PhB1 * r ** (g.Q - 1)
        p = horizontal_perimeter(u, t, g, eps=eps, method=method, grad=grad).value
        out.append(VerificationReport(f"perimeter_quasimonotone[{label}{gauge.name},t={t:.4g}]",
                                      pstar, p, constant=constants.Cper_bound,
                                      tolerance=tolerance,
                                      meta={"radius": r, "measure": nu, "method": method,
                                            "cells": cells}))
    worst = max((rep.ratio for rep in out), default=0.0)
    for rep in out:
        rep.meta["worst_ratio"] = worst
        rep.meta["skipped_unresolved"] = skipped
    return out


def _psi_grid(ustar: GridField, profile: RearrangementProfile, gauge: Gauge, p: float,
              weight_power: float = 0.0) -> tuple[float, np.ndarray]:
    """``int Psi(u*)^p |D_h||x|||^weight_power`` summed over the u* grid nodes."""
    pts = ustar.points()
    psi = profile_derivative(profile).psi_at_radius(gauge.norm(pts))
    terms = np.power(psi, p)
    if weight_power:
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.nan_to_num(gauge.hgrad(pts), nan=0.0)
        terms = terms * np.power(w, weight_power)
    return float(np.sum(terms) * ustar.cell_volume), terms


def psi_energy(profile: RearrangementProfile, p: float) -> float:
    """``int Psi(u*)^p dx = int |nu~'(r)|^p dV(r)``, exact for the piecewise-linear table."""
    return profile_derivative(profile).radial_energy(profile.volume, p)


def energy_p1(u: GridField, g: GroupSpec, gauge: Gauge, constants: ConstantsRecord | None = None,
              levels: int = 512, tolerance: float = 0.03, rearranged=None,
              label: str = "") -> VerificationReport:
    """``||u*||_BV <= Cper_bound ||u||_BV``, both by finite differences."""
    constants = constants or constants_for(g, gauge)
    ustar, prof = _rearrange(u, gauge, levels, rearranged)
    lhs = energy(ustar, 1.0, g)
    rhs = energy(u, 1.0, g)
    lhs_psi, _ = _psi_grid(ustar, prof, gauge, 1.0, weight_power=1.0)
    return VerificationReport(f"energy_p1[{label}{gauge.name}]", lhs, rhs,
                              constant=constants.Cper_bound, tolerance=tolerance,
                              meta={"lhs_psi": lhs_psi, "Cper_bound": constants.Cper_bound,
                                    "constants_nodes": constants.nodes, "levels": levels})


def energy_weighted_p(u: GridField, g: GroupSpec, gauge: Gauge, p: float,
                      constants: ConstantsRecord | None = None, levels: int = 512,
                      tolerance: float = 0.03, floor: float = 0.05, rearranged=None,
                      label: str = "") -> VerificationReport:
    """``int |D_h u*|^p / |D_h||x|||^p <= Csym^p int |D_h u|^p``.

    The left side is ``int Psi(u*)^p``, the radial factor of ``|D_h u*|``, so
    nodes where the gauge weight vanishes need no division.  It is integrated
    in polar form over the profile shells; the node sum on the u* grid and the
    share of it sitting on nodes with weight below ``floor`` are reported.
    """
    if p < 1:
        raise InputError("p must be >= 1")
    constants = constants or constants_for(g, gauge)
    ustar, prof = _rearrange(u, gauge, levels, rearranged)
    rhs = energy(u, p, g)
    if prof.profile.size == 0 or not np.any(ustar.values > 0):
        return VerificationReport(f"energy_weighted_p{p:g}[{label}{gauge.name}]", 0.0, 0.0,
                                  constant=constants.Csym ** p, tolerance=tolerance)
    lhs = psi_energy(prof, p)
    lhs_grid, terms = _psi_grid(ustar, prof, gauge, p)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.nan_to_num(gauge.hgrad(ustar.points()), nan=0.0)
    low = float(np.sum(terms[w < floor]) / np.sum(terms)) if np.sum(terms) > 0 else 0.0
    return VerificationReport(f"energy_weighted_p{p:g}[{label}{gauge.name}]", lhs, rhs,
                              constant=constants.Csym ** p, tolerance=tolerance,
                              meta={"lhs_grid": lhs_grid, "low_weight_fraction": low, "floor": floor,
                                  "Csym": constants.Csym, "constants_nodes": constants.nodes,
                                  "levels": levels})


def energy_carnot_p(u: GridField, g: GroupSpec, p: float, constants: ConstantsRecord | None = None,
                    levels: int = 512, tolerance: float = 0.03, rearranged=None,
                    label: str = "") -> VerificationReport:
    """``int |D_h u*|^p <= Cper_bound^p int |D_h u|^p`` for the Carnot gauge, where
    ``|D_h u*| = Psi(u*)``."""
    if p < 1:
        raise InputError("p must be >= 1")
    gauge = carnot_gauge(g)
    constants = constants or constants_for(g, gauge)
    ustar, prof = _rearrange(u, gauge, levels, rearranged)
    rhs = energy(u, p, g)
    lhs = psi_energy(prof, p)
    return VerificationReport(f"energy_carnot_p{p:g}[{label}{gauge.name}]", lhs, rhs,
                              constant=constants.Cper_bound ** p, tolerance=tolerance,
                              meta={"lhs_fd": energy(ustar, p, g),
                                    "Cper_bound": constants.Cper_bound,
                                    "constants_nodes": constants.nodes, "levels": levels})
