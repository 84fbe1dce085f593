"""Horizontal calculus on grid fields: D_h u, BV norms, perimeters, polar integration.

Perimeters use a mollified indicator: the BV norm of ``S((u - t)/eps + 1/2)``
where ``S`` is the quintic smoothstep.  By the chain rule this equals
``int S'((u - t)/eps + 1/2) / eps * |D_h u|``, which is what is summed.
By default ``eps`` varies per node, ``eps = cells * |(h_j d_j u)_j|``, so the
transition band is about ``cells`` grid cells thick wherever the level set is;
a single value-space width undersamples level sets whose slope varies a lot.
"""
from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre
from scipy.stats import qmc

from .errors import InputError, NumericalError
from .fields import GridField, grid_field
from .gauges import Gauge
from .groups import GroupSpec, dilate
from .reports import VerificationReport


@dataclass(frozen=True, eq=False)
class HorizontalGradientField:
    components: np.ndarray
    """shape ``field.shape + (m,)``; ``[..., i]`` is ``X_i u``"""
    field: GridField
    partials: np.ndarray
    """coordinate partials ``d_j u``, shape ``field.shape + (n,)``"""

    @property
    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.components, axis=-1)


@dataclass(frozen=True)
class PerimeterEstimate:
    value: float
    method: str
    h: float
    eps: float


def _partials(field: GridField) -> np.ndarray:
    if min(field.shape) < 3:
        raise InputError("need at least 3 nodes per axis for central differences")
    d = np.gradient(field.values, *field.spacing, edge_order=1)
    if field.group.n == 1:
        d = [d]
    return np.stack(d, axis=-1)


def horizontal_gradient(field: GridField, g: GroupSpec | None = None) -> HorizontalGradientField:
    """``X_i u = sum_j X_i^j(p) d_j u`` with central differences (one-sided at faces)."""
    g = g or field.group
    if g.n != field.group.n:
        raise InputError("group dimension does not match the field")
    grad = _partials(field)
    if g.Q == g.n and g.m == g.n:
        return HorizontalGradientField(grad, field, grad)
    frame = g.frame(field.points())
    return HorizontalGradientField(np.einsum("...ij,...j->...i", frame, grad), field, grad)


def energy(field: GridField, p: float = 1.0, g: GroupSpec | None = None,
           grad: HorizontalGradientField | None = None) -> float:
    """``int |D_h u|^p dL^n`` (midpoint quadrature, Lebesgue measure)."""
    grad = grad or horizontal_gradient(field, g)
    return float(np.sum(grad.norm ** p) * field.cell_volume)


def bv_norm(field: GridField, g: GroupSpec | None = None) -> float:
    return energy(field, 1.0, g)


def smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10 - 15 * s + 6 * s * s)


def smoothstep_derivative(s):
    s = np.clip(s, 0.0, 1.0)
    return 30 * s * s * (1 - s) ** 2


def local_eps(grad: HorizontalGradientField, cells: float = 4.0) -> np.ndarray:
    """Per-node value-space width: the change of u over ``cells`` grid cells."""
    step = np.sqrt(np.sum((grad.partials * grad.field.spacing) ** 2, axis=-1))
    return np.maximum(cells * step, np.finfo(float).tiny)


def horizontal_perimeter(field: GridField, t: float, g: GroupSpec | None = None,
                         eps=None, method: str = "mollified-bv",
                         grad: HorizontalGradientField | None = None,
                         cells: float = 4.0, band: str = "centered") -> PerimeterEstimate:
    """Horizontal perimeter of ``E_u(t) = {u > t}``.

    ``"mollified-bv"``: BV norm of the smoothed indicator of level t;
    ``eps`` is a value-space width (scalar or per-node array), by default
    :func:`local_eps`.  ``band="centered"`` smooths over ``(t - eps/2, t + eps/2)``,
    ``band="below"`` over ``(t - eps, t]``.  A centred band is clipped at 0.
    ``"coarea-slice"``: centred difference of ``s -> ||min(u, s)||_BV`` at
    ``s = t`` with a scalar step ``eps`` (default: median local width near t).
    """
    h = float(np.max(field.spacing))
    umax = float(field.values.max())
    if band not in ("centered", "below"):
        raise InputError(f"unknown band {band!r}")
    shift = 0.5 if band == "centered" else 1.0
    grad = grad or horizontal_gradient(field, g)
    if eps is None:
        eps = local_eps(grad, cells)
    if t >= umax + (0.0 if band == "centered" else np.max(eps)):
        return PerimeterEstimate(0.0, method, h, 0.0)
    if method == "mollified-bv":
        # a centred band stays >= 0 so E_u(0) = {u > 0} is seen from inside;
        # below-bands may dip under 0 (the coarea slices rely on it)
        lower = t - shift * eps
        if band == "centered":
            lower = np.maximum(lower, 0.0)
        w = smoothstep_derivative((field.values - lower) / eps) / eps
        val = float(np.sum(w * grad.norm) * field.cell_volume)
    elif method == "coarea-slice":
        if np.ndim(eps):
            near = np.abs(field.values - t) < eps
            eps = float(np.median(eps[near])) if np.any(near) else float(np.median(eps))
        lo, hi = max(t - eps / 2, 0.0), t + eps / 2
        b_hi = bv_norm(field.with_values(np.minimum(field.values, hi)), g)
        b_lo = bv_norm(field.with_values(np.minimum(field.values, lo)), g)
        val = (b_hi - b_lo) / (hi - lo)
    else:
        raise InputError(f"unknown perimeter method {method!r}")
    return PerimeterEstimate(val, method, h, float(np.median(eps)))


def perimeter_sweep(field: GridField, thresholds, g: GroupSpec | None = None,
                    eps=None) -> np.ndarray:
    grad = horizontal_gradient(field, g)
    if eps is None:
        eps = local_eps(grad)
    return np.array([horizontal_perimeter(field, float(t), eps=eps, grad=grad).value
                     for t in thresholds])


def _divergence_h(field: GridField, coeffs: np.ndarray, g: GroupSpec) -> np.ndarray:
    """``sum_i X_i f_i`` for horizontal coefficients ``coeffs[..., i]``.

    The frames shipped here are divergence free in these coordinates, so this
    is the divergence of the vector field ``sum_i f_i X_i``.
    """
    frame = None if (g.Q == g.n and g.m == g.n) else g.frame(field.points())
    out = np.zeros(field.shape)
    for i in range(g.m):
        d = np.gradient(coeffs[..., i], *field.spacing, edge_order=1)
        d = np.stack([d] if g.n == 1 else d, axis=-1)
        out += d[..., i] if frame is None else np.einsum("...j,...j->...", frame[..., i, :], d)
    return out


def perimeter_dual_bound(field: GridField, t: float, g: GroupSpec | None = None,
                         deltas=(0.02, 0.1, 0.3), extra=()) -> float:
    """Cross-check ``P_h(E) >= int_E div_h F`` over a small dictionary of ``|F| <= 1``.

    The dictionary holds the normalised fields ``-D_h u / sqrt(d^2 + |D_h u|^2)``
    (``d`` a fraction ``deltas`` of the median gradient near level ``t``) plus
    any coefficient arrays in ``extra`` (shape ``field.shape + (m,)``, rescaled
    to ``|F| <= 1``).  On a grid the integral is a node sum, so the bound holds
    up to discretisation error; it is meant as a coarse-grid sanity check of
    the mollified estimate, not as an estimator.
    """
    g = g or field.group
    if t >= float(field.values.max()):
        return 0.0
    grad = horizontal_gradient(field, g)
    comp, nrm = grad.components, grad.norm
    near = np.abs(field.values - t) < 0.1 * max(float(field.values.max()), 1e-300)
    scale = float(np.median(nrm[near & (nrm > 0)])) if np.any(near & (nrm > 0)) else 1.0
    dictionary = [-comp / np.sqrt((d * scale) ** 2 + nrm[..., None] ** 2) for d in deltas]
    for F in extra:
        F = np.asarray(F, dtype=float)
        size = np.linalg.norm(F, axis=-1, keepdims=True)
        dictionary.append(F / np.maximum(size, 1.0))
    inside = field.values > t
    best = 0.0
    for F in dictionary:
        best = max(best, float(np.sum(_divergence_h(field, F, g)[inside]) * field.cell_volume))
    return best


def coarea_check(field: GridField, g: GroupSpec | None = None, K: int = 64,
                 tolerance: float = 0.05, label: str = "",
                 band_steps: float = 4.0) -> VerificationReport:
    """``||u||_BV`` against ``int_0^inf P_h(E_u(t)) dt``.

    Midpoint rule with step ``dt = max u / K``.  Slices use the one-sided band
    ``(t - band_steps dt, t]``: the difference quotients at zero-valued nodes
    next to the support then count towards small t, and nodes on either side
    of a jump are both seen.  The band estimate vanishes once
    ``t > max u + band_steps dt``.
    """
    if K < 16:
        raise InputError("need K >= 16 slices")
    umax = float(field.values.max())
    bv = bv_norm(field, g)
    claim = f"coarea[{label}]" if label else "coarea"
    if umax == 0.0:
        return VerificationReport(claim, 0.0, 0.0, tolerance=tolerance, kind="relative")
    dt = umax / K
    eps = band_steps * dt
    ts = (np.arange(K + int(math.ceil(band_steps))) + 0.5) * dt
    grad = horizontal_gradient(field, g)
    per = np.array([horizontal_perimeter(field, float(t), eps=eps, grad=grad, band="below").value
                    for t in ts])
    rhs = float(np.sum(per) * dt)
    return VerificationReport(claim, bv, rhs, tolerance=tolerance, kind="relative",
                              meta={"K": K, "h": float(np.max(field.spacing)),
                                    "band_steps": band_steps})


# --- sets given as sublevel sets of shape functions -------------------------

@dataclass(frozen=True)
class SetShape:
    """``E = {s(x) < 1}``; ``extent`` holds half-widths of a box containing ``{s < 1.5}``."""

    name: str
    s: Callable[[np.ndarray], np.ndarray]
    extent: tuple[float, ...]


def ball_shape(gauge: Gauge, R: float = 1.0, name: str | None = None) -> SetShape:
    ext = tuple(float(e) for e in gauge.ball_extent(1.5 * R))
    return SetShape(name or f"ball[{gauge.name},R={R:g}]", lambda p: gauge.norm(p) / R, ext)


def shape_field(shape: SetShape, g: GroupSpec, nodes: int, margin: float = 0.05) -> GridField:
    """Field ``max(0, 2 - s)`` whose superlevel set at 1 is the shape."""
    box = [(-e * (1 + margin), e * (1 + margin)) for e in shape.extent]
    return grid_field(g, box, (nodes,) * g.n, lambda p: np.maximum(0.0, 2.0 - shape.s(p)))


def shape_measure_and_perimeter(shape: SetShape, g: GroupSpec, nodes: int = 64,
                                cells: float = 4.0) -> tuple[float, float]:
    """Measure and horizontal perimeter of the same mollified indicator.

    Counting nodes instead would make faces that fall on grid planes
    contribute a whole layer of cells or none.
    """
    f = shape_field(shape, g, nodes)
    grad = horizontal_gradient(f)
    eps = local_eps(grad, cells)
    vol = float(np.sum(smoothstep((f.values - 1.0) / eps + 0.5)) * f.cell_volume)
    per = horizontal_perimeter(f, 1.0, eps=eps, grad=grad).value
    return vol, per


def isoperimetric_ratio(volume: float, perimeter: float, Q: int) -> float:
    """``L(E)^((Q-1)/Q) / P_h(E)``."""
    return volume ** ((Q - 1) / Q) / perimeter


def isoperimetric_scan(g: GroupSpec, family: list[SetShape], nodes: int = 64) -> list[dict]:
    rows = []
    for shape in family:
        vol, per = shape_measure_and_perimeter(shape, g, nodes)
        rows.append({"set": shape.name, "volume": vol, "perimeter": per,
                     "ratio": isoperimetric_ratio(vol, per, g.Q)})
    return rows


def perimeter_homogeneity_check(g: GroupSpec, gauge: Gauge, radii, nodes: int = 64,
                                tolerance: float = 0.05) -> VerificationReport:
    """Fit ``log P_h(B_R)`` against ``log R`` on one grid holding the largest ball."""
    radii = np.asarray(sorted(radii), dtype=float)
    if len(radii) < 2:
        raise InputError("need at least 2 radii")
    Rmax = radii[-1]
    top = 2.0 * Rmax
    ext = gauge.ball_extent(Rmax) * 1.15
    f = grid_field(g, [(-e, e) for e in ext], (nodes,) * g.n,
                   lambda p: np.maximum(0.0, top - gauge.norm(p)))
    grad = horizontal_gradient(f)
    eps = local_eps(grad)
    per = np.array([horizontal_perimeter(f, top - R, eps=eps, grad=grad).value for R in radii])
    slope = float(np.polyfit(np.log(radii), np.log(per), 1)[0])
    expected = g.Q - 1
    # identity rule: relative for Q - 1 >= 1, absolute on the line where the slope is 0
    return VerificationReport(f"perimeter_homogeneity[{g.name}/{gauge.name}]", slope, expected,
                              tolerance=tolerance, kind="identity",
                              meta={"radii": radii.tolist(), "perimeters": per.tolist(),
                                    "ratio_last_first": float(per[-1] / per[0]),
                                    "expected_ratio": float((radii[-1] / radii[0]) ** expected),
                                    "nodes": nodes})


# --- polar coordinates --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    """Points on the unit gauge sphere with weights summing to ``sigma(B_1)``."""

    points: np.ndarray
    weights: np.ndarray
    sigma: float
    stderr: float
    eta: float


def sphere_quadrature(gauge: Gauge, samples: int = 200_000, seed: int = 0,
                      eta: float = 0.05) -> SphereQuadrature:
    """Sample the shell ``1 - eta < ||x|| < 1 + eta`` uniformly and project radially.

    ``samples`` is rounded up to a power of two (Sobol balance); ``stderr`` is
    the plain Monte Carlo standard error, a conservative bound for these points.

    Lebesgue measure factors as ``r^(Q-1) dr dsigma``, so the projections are
    sigma-distributed and ``L(shell) = sigma(B_1) ((1+eta)^Q - (1-eta)^Q) / Q``.
    """
    g = gauge.group
    ext = gauge.ball_extent(1 + eta) * 1.001
    box_vol = float(np.prod(2 * ext))
    # scrambled Sobol points: same seed, same points; error well below plain MC
    sob = qmc.Sobol(g.n, scramble=True, seed=seed)
    pts = -ext + 2 * ext * sob.random_base2(max(1, math.ceil(math.log2(samples))))
    samples = len(pts)
    nrm = gauge.norm(pts)
    if not np.all(np.isfinite(nrm)):
        raise NumericalError("gauge evaluation returned non-finite values on sphere samples")
    inside = (nrm > 1 - eta) & (nrm < 1 + eta)
    k = int(np.count_nonzero(inside))
    if k == 0:
        raise NumericalError("no samples landed in the gauge shell", {"eta": eta})
    frac = k / samples
    shell = box_vol * frac
    factor = ((1 + eta) ** g.Q - (1 - eta) ** g.Q) / g.Q
    sigma = shell / factor
    stderr = box_vol * math.sqrt(frac * (1 - frac) / samples) / factor
    proj = dilate(g, 1.0 / nrm[inside], pts[inside])
    return SphereQuadrature(proj, np.full(k, sigma / k), sigma, stderr, eta)


def polar_integrate(f: Callable[[np.ndarray], np.ndarray], gauge: Gauge, R: float,
                    g: GroupSpec | None = None, quad: SphereQuadrature | None = None,
                    radial_nodes: int = 48) -> float:
    """``int_{B_R} f dL^n = int_0^R (int_{dB_1} f(delta_r x) dsigma) r^(Q-1) dr``."""
    g = g or gauge.group
    quad = quad or sphere_quadrature(gauge)
    x, w = roots_legendre(radial_nodes)
    r = 0.5 * R * (x + 1)
    wr = 0.5 * R * w
    total = 0.0
    for ri, wi in zip(r, wr):
        vals = np.asarray(f(dilate(g, ri, quad.points)), dtype=float)
        total += wi * ri ** (g.Q - 1) * float(np.sum(vals * quad.weights))
    return total


def sphere_weight_integral(gauge: Gauge, R: float = 1.0, g: GroupSpec | None = None,
                           nodes: int = 64, floor: float = 0.05,
                           quad: SphereQuadrature | None = None,
                           tolerance: float = 0.05) -> VerificationReport:
    """``int 1/|D_h||x||| dP_h(B_R)`` against ``R^(Q-1) sigma(B_1)``.

    The perimeter measure of ``B_R`` is the grid density
    ``S'(.)/eps * |D_h ||x|| |`` (finite differences); it is divided by the
    gauge's own ``|D_h ||x|| |``.  Nodes where that weight is below ``floor``
    are excluded and their share of the shell mass is reported.
    """
    g = g or gauge.group
    quad = quad or sphere_quadrature(gauge)
    top = 2.0 * R
    ext = gauge.ball_extent(R) * 1.15
    f = grid_field(g, [(-e, e) for e in ext], (nodes,) * g.n,
                   lambda p: np.maximum(0.0, top - gauge.norm(p)))
    grad = horizontal_gradient(f)
    eps = local_eps(grad)
    bump = smoothstep_derivative((f.values - R) / eps + 0.5) / eps
    pts = f.points()
    with np.errstate(invalid="ignore", divide="ignore"):
        w = gauge.hgrad(pts)
    w = np.nan_to_num(w, nan=0.0)
    keep = w >= floor
    dens = bump * grad.norm
    lhs = float(np.sum(np.where(keep, dens / np.where(keep, w, 1.0), 0.0)) * f.cell_volume)
    shell_mass = float(np.sum(bump))
    excluded = float(np.sum(bump[~keep]) / shell_mass) if shell_mass > 0 else 0.0
    rhs = R ** (g.Q - 1) * quad.sigma
    rep = VerificationReport(f"sphere_weight[{g.name}/{gauge.name},R={R:g}]", lhs, rhs,
                             tolerance=tolerance, kind="inequality",
                             meta={"excluded_fraction": excluded, "floor": floor,
                                   "sigma": quad.sigma, "sigma_stderr": quad.stderr,
                                   "perimeter": float(np.sum(dens) * f.cell_volume),
                                   "nodes": nodes})
    if excluded >= 0.01:
        rep.meta["warning"] = "degenerate weights on more than 1% of the sphere"
    return rep


def preimage_node_count(field: GridField, t: float, s: float) -> int:
    """Number of nodes with ``t < u < s``."""
    v = field.values
    return int(np.count_nonzero((v > t) & (v < s)))
