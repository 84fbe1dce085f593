"""Homogeneous gauges ``||x||`` and the Carnot-Carathéodory distance on H^1.

A gauge fixes the ball family ``B_r = {||x|| < r}``.  Besides evaluation each
gauge carries ``|D_h ||x|| |``, the length of the horizontal gradient of the
gauge, which is homogeneous of degree zero.
"""
from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import InputError, NumericalError, UndefinedPointError
from .groups import GroupSpec, dilate
from .reports import VerificationReport

SMOOTH = "smooth-away-from-origin"
CARNOT = "carnot"


@dataclass(frozen=True)
class Gauge:
    name: str
    group: GroupSpec
    norm: Callable[[np.ndarray], np.ndarray]
    hgrad: Callable[[np.ndarray], np.ndarray]
    smoothness_tag: str = SMOOTH
    unit_volume: float | None = None
    """Exact Lebesgue measure of B_1 when known in closed form or by 1-D quadrature."""
    extent: tuple[float, ...] | None = None
    """Half-widths of the smallest coordinate box containing B_1."""

    def ball_extent(self, r: float) -> np.ndarray:
        if self.extent is None:
            raise InputError(f"gauge {self.name!r} has no declared unit-ball extent")
        return np.asarray(self.extent) * np.power(float(r), self.group.weights)


def gauge_eval(gauge: Gauge, p) -> np.ndarray | float:
    p = gauge.group.check_point(p)
    out = gauge.norm(p)
    return float(out) if np.ndim(out) == 0 else out


def gauge_hgrad_norm(gauge: Gauge, p) -> np.ndarray | float:
    """``|D_h ||p|| |``; raises :class:`UndefinedPointError` at the origin."""
    p = gauge.group.check_point(p)
    if np.any(np.all(p == 0.0, axis=-1)):
        raise UndefinedPointError("the gauge is not differentiable at the origin")
    out = gauge.hgrad(p)
    return float(out) if np.ndim(out) == 0 else out


def in_ball(gauge: Gauge, p, r: float) -> np.ndarray:
    return gauge.norm(gauge.group.check_point(p)) < r


# --- Euclidean-type gauges --------------------------------------------------

def _ones_like_norm(p):
    with np.errstate(invalid="ignore"):
        nz = np.any(p != 0.0, axis=-1)
    return np.where(nz, 1.0, np.nan)


def euclidean_gauge(g: GroupSpec, tag: str = SMOOTH) -> Gauge:
    if g.Q != g.n:
        raise InputError("the Euclidean norm is a gauge only on Euclidean groups")
    unit = math.pi ** (g.n / 2) / math.gamma(g.n / 2 + 1)
    return Gauge("euclidean" if tag == SMOOTH else "carnot", g,
                 norm=lambda p: np.linalg.norm(p, axis=-1), hgrad=_ones_like_norm,
                 smoothness_tag=tag, unit_volume=unit, extent=(1.0,) * g.n)


def _heis_box_norm(p):
    return np.maximum(np.maximum(np.abs(p[..., 0]), np.abs(p[..., 1])), np.sqrt(np.abs(p[..., 2])))


def _heis_box_hgrad(p):
    x, y, t = np.abs(p[..., 0]), np.abs(p[..., 1]), np.abs(p[..., 2])
    st = np.sqrt(t)
    vertical = (st > x) & (st > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.hypot(x, y) / (4.0 * st)
    out = np.where(vertical, v, 1.0)
    return np.where((x == 0) & (y == 0) & (t == 0), np.nan, out)


def box_gauge(g: GroupSpec) -> Gauge:
    """max-type gauge: ``max_i |x_i|^(1/w_i)``; on H^1 the unit ball is [-1, 1]^3."""
    if g.name == "heisenberg1":
        return Gauge("box", g, norm=_heis_box_norm, hgrad=_heis_box_hgrad,
                     unit_volume=8.0, extent=(1.0, 1.0, 1.0))
    if g.Q != g.n:
        raise InputError(f"box gauge not defined for group {g.name}")
    return Gauge("box", g, norm=lambda p: np.max(np.abs(p), axis=-1), hgrad=_ones_like_norm,
                 unit_volume=2.0 ** g.n, extent=(1.0,) * g.n)


# --- Korányi gauge ------------------------------------------------------------

def _koranyi_norm(p):
    r2 = p[..., 0] ** 2 + p[..., 1] ** 2
    return (r2 * r2 + 16.0 * p[..., 2] ** 2) ** 0.25


def _koranyi_hgrad(p):
    # X_1 rho = (|z|^2 x - 4 t y) / rho^3, X_2 rho = (|z|^2 y + 4 t x) / rho^3
    # so |D_h rho| = |z| / rho
    rho = _koranyi_norm(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.hypot(p[..., 0], p[..., 1]) / rho


def koranyi_gauge(g: GroupSpec) -> Gauge:
    if g.name != "heisenberg1":
        raise InputError("the Korányi gauge is defined on heisenberg1 only")
    # |B_1| = pi * int_0^1 s sqrt(1 - s^4) ds = pi^2 / 8
    return Gauge("koranyi", g, norm=_koranyi_norm, hgrad=_koranyi_hgrad,
                 unit_volume=math.pi ** 2 / 8.0, extent=(1.0, 1.0, 0.25))


def koranyi_partials(p) -> np.ndarray:
    """Analytic ``(X_1 rho, X_2 rho)`` for the Korányi gauge, shape ``(..., 2)``."""
    p = np.asarray(p, dtype=float)
    x, y, t = p[..., 0], p[..., 1], p[..., 2]
    r2 = x * x + y * y
    rho3 = _koranyi_norm(p) ** 3
    return np.stack([(r2 * x - 4 * t * y) / rho3, (r2 * y + 4 * t * x) / rho3], axis=-1)


# --- Carnot-Carathéodory distance on H^1 ------------------------------------
#
# Geodesics from 0 are circle arcs in the (x, y) plane.  An arc of length L and
# turning angle phi reaches |z| = L sin(phi/2) / (phi/2) and
# |t| = L^2 (phi - sin phi) / (2 phi^2), so |t| / |z|^2 = mu(phi) with
# mu(phi) = (phi - sin phi) / (8 sin^2(phi/2)), increasing from 0 to inf on [0, 2pi).

def _phi_minus_sin(phi):
    phi = np.asarray(phi, dtype=float)
    p2 = phi * phi
    series = phi * p2 / 6.0 * (1 - p2 / 20.0 * (1 - p2 / 42.0 * (1 - p2 / 72.0)))
    return np.where(np.abs(phi) < 1e-2, series, phi - np.sin(phi))


def _mu(phi):
    s = np.sin(0.5 * phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        return _phi_minus_sin(phi) / (8.0 * s * s)


def _mu_small(phi):
    # mu(phi) ~ phi / 12 near 0; avoids 0/0 at phi == 0
    return np.where(phi < 1e-6, phi / 12.0, _mu(np.maximum(phi, 1e-6)))


def cc_distance(p, iters: int = 64) -> np.ndarray:
    """Vectorized d_CC(p, 0) on H^1 (bisection on the turning angle)."""
    p = np.asarray(p, dtype=float)
    x, y, t = p[..., 0], p[..., 1], p[..., 2]
    r2 = x * x + y * y
    at = np.abs(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(r2 > 0, at / np.where(r2 > 0, r2, 1.0), np.inf)
    lo = np.zeros_like(k)
    hi = np.full_like(k, 2 * math.pi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = _mu_small(mid) > k
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    phi = np.where(np.isfinite(k), 0.5 * (lo + hi), 2 * math.pi)
    half = 0.5 * phi
    with np.errstate(divide="ignore", invalid="ignore"):
        sinc = np.where(half > 1e-8, np.sin(half) / np.where(half > 1e-8, half, 1.0), 1.0)
        from_z = np.sqrt(r2) / sinc
        from_t = np.sqrt(2.0 * phi * phi * at / _phi_minus_sin(phi))
    # each branch is well conditioned on its half of the phi range
    return np.where(phi < math.pi, from_z, from_t)


def cc_distance_from_origin(g: GroupSpec, p) -> float:
    """d_CC(p, 0) on H^1 to relative accuracy ~1e-12."""
    if g.name != "heisenberg1":
        raise InputError("cc_distance_from_origin is implemented for heisenberg1")
    p = g.check_point(p)
    if p.ndim != 1:
        raise InputError("expected a single point; use cc_distance for arrays")
    d = float(cc_distance(p))
    if not math.isfinite(d) or d < 0:
        raise NumericalError("CC distance root find failed", {"point": p.tolist(), "value": d})
    r2 = p[0] ** 2 + p[1] ** 2
    if r2 > 0 and p[2] != 0:
        # residual of the matching condition mu(phi) = |t|/|z|^2, recomputed from d
        sinc = math.sqrt(r2) / d
        if not 0 < sinc <= 1 + 1e-12:
            raise NumericalError("inconsistent geodesic parameters",
                                 {"point": p.tolist(), "distance": d, "sinc": sinc})
    return d


def _carnot_unit_volume() -> float:
    def s(phi):
        return math.sin(phi / 2) / (phi / 2)

    def t(phi):
        return (phi - math.sin(phi)) / (2 * phi * phi)

    def ds(phi):
        h = phi / 2
        return 0.5 * (math.cos(h) * h - math.sin(h)) / (h * h)

    # solid of revolution |t| <= T(|z|), boundary parametrized by phi in (0, 2pi)
    val, _ = integrate.quad(lambda f: -s(f) * t(f) * ds(f), 0.0, 2 * math.pi,
                            limit=200, epsabs=1e-13, epsrel=1e-12)
    return 4 * math.pi * val


CARNOT_H1_UNIT_VOLUME = _carnot_unit_volume()
CARNOT_H1_T_EXTENT = 1.0 / (2.0 * math.pi)  # max |t| on the unit sphere, at phi = pi


def carnot_gauge(g: GroupSpec) -> Gauge:
    """``||x||_C = d_CC(x, 0)``; its horizontal gradient has length 1 a.e."""
    if g.Q == g.n:
        return euclidean_gauge(g, tag=CARNOT)
    if g.name != "heisenberg1":
        raise InputError(f"Carnot gauge not implemented for {g.name}")
    return Gauge("carnot", g, norm=cc_distance, hgrad=_ones_like_norm, smoothness_tag=CARNOT,
                 unit_volume=CARNOT_H1_UNIT_VOLUME, extent=(1.0, 1.0, CARNOT_H1_T_EXTENT))


def nonhomogeneous_gauge(g: GroupSpec) -> Gauge:
    """Negative control: ``|p| + |p|^2`` (Euclidean length), not dilation-homogeneous."""
    def norm(p):
        r = np.linalg.norm(p, axis=-1)
        return r + r * r

    def hgrad(p):
        grad = (1 + 2 * np.linalg.norm(p, axis=-1))[..., None] * p / np.linalg.norm(
            p, axis=-1, keepdims=True)
        return np.linalg.norm(np.einsum("...ij,...j->...i", g.frame(p), grad), axis=-1)
    return Gauge("nonhomogeneous", g, norm=norm, hgrad=hgrad, smoothness_tag=SMOOTH,
                 unit_volume=None, extent=None)


_GAUGES = {
    "euclidean": euclidean_gauge,
    "koranyi": koranyi_gauge,
    "box": box_gauge,
    "carnot": carnot_gauge,
}


def get_gauge(gauge_id: str, g: GroupSpec) -> Gauge:
    try:
        factory = _GAUGES[gauge_id]
    except KeyError:
        raise InputError(f"unknown gauge id {gauge_id!r}; known: {sorted(_GAUGES)}") from None
    return factory(g)


def gauge_ids() -> list[str]:
    return sorted(_GAUGES)


# --- brute-force oracle -------------------------------------------------------

def cc_polyline_distance(target, segments: int = 40, starts: int = 6, seed: int = 0) -> float:
    """Shortest horizontal polyline from 0 to ``target`` in H^1.

    Each of ``segments`` pieces is a horizontal straight segment of common length
    L/segments and free direction; minimizes L subject to hitting the target.
    Independent of the closed-form geodesic family; accurate to a few percent.
    """
    target = np.asarray(target, dtype=float)
    N = segments

    def endpoint(v):
        L, th = v[0], v[1:]
        ell = L / N
        dx, dy = ell * np.cos(th), ell * np.sin(th)
        x = np.concatenate([[0.0], np.cumsum(dx)])
        y = np.concatenate([[0.0], np.cumsum(dy)])
        t = np.sum(0.5 * (x[:-1] * dy - y[:-1] * dx))
        return np.array([x[-1], y[-1], t])

    rng = np.random.default_rng(seed)
    best = math.inf
    z = math.hypot(target[0], target[1])
    base = math.atan2(target[1], target[0]) if z > 0 else 0.0
    L0 = max(z, math.sqrt(4 * math.pi * abs(target[2])), 1e-3)
    for k in range(starts):
        turn = np.sign(target[2] or 1.0) * (2 * math.pi * (k + 1) / starts)
        th0 = base - turn / 2 + turn * (np.arange(N) + 0.5) / N + 0.01 * rng.standard_normal(N)
        x0 = np.concatenate([[L0 * (1 + 0.2 * k / starts)], th0])
        res = optimize.minimize(lambda v: v[0], x0, method="SLSQP",
                                constraints=[{"type": "eq", "fun": lambda v: endpoint(v) - target}],
                                bounds=[(0, None)] + [(None, None)] * N,
                                options={"maxiter": 500, "ftol": 1e-12})
        if np.max(np.abs(endpoint(res.x) - target)) < 1e-7:
            best = min(best, float(res.x[0]))
    if not math.isfinite(best):
        raise NumericalError("polyline oracle did not find a feasible path", {"target": target.tolist()})
    return best


# --- self-test ----------------------------------------------------------------

def frame_derivatives_fd(gauge: Gauge, p: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """``(X_i ||.||)(p)`` by central differences along the frame, shape ``(..., m)``."""
    fr = gauge.group.frame(p)
    cols = []
    for i in range(gauge.group.m):
        v = fr[..., i, :]
        cols.append((gauge.norm(p + step * v) - gauge.norm(p - step * v)) / (2 * step))
    return np.stack(cols, axis=-1)


def validate_gauge(gauge: Gauge, samples: int = 1000, seed: int = 0,
                   homogeneity_tol: float = 1e-9, fd_tol: float | None = None,
                   degree_zero_tol: float | None = None) -> VerificationReport:
    """Random-sample check of positivity, homogeneity and the horizontal gradient.

    The report's lhs is the worst violation divided by its tolerance, so it
    passes iff lhs <= 1.  Raw maxima live in ``meta``.
    """
    if samples < 1:
        raise InputError("samples must be >= 1")
    g = gauge.group
    carnot = gauge.smoothness_tag == CARNOT and g.Q != g.n
    if fd_tol is None:
        fd_tol = 1e-3 if carnot else 1e-4
    if degree_zero_tol is None:
        degree_zero_tol = 1e-3 if carnot else 1e-8
    rng = np.random.default_rng(seed)
    x = rng.uniform(-3, 3, (samples, g.n))
    x = x[np.linalg.norm(x, axis=1) > 1e-3]
    nx = gauge.norm(x)

    viol = {}
    hom = 0.0
    for r in (0.5, 2.0, 3.0):
        nr = gauge.norm(dilate(g, r, x))
        hom = max(hom, float(np.max(np.abs(nr - r * nx) / (1 + r * nx))))
    viol["homogeneity"] = (hom, homogeneity_tol)
    zero_val = float(gauge.norm(np.zeros(g.n)))
    pos = 0.0 if (zero_val == 0.0 and np.all(nx > 0)) else 1.0
    viol["positivity"] = (pos, 0.5)

    # stay off the measure-zero sets where max-type or Carnot gauges kink
    if carnot:
        keep = np.hypot(x[:, 0], x[:, 1]) > 0.2 * nx
        xs = x[keep]
    else:
        xs = x
    if carnot:
        hg = np.linalg.norm(frame_derivatives_fd(gauge, xs, step=1e-5), axis=-1)
        fd_err = float(np.max(np.abs(hg - 1.0)))
        hg_d = np.linalg.norm(frame_derivatives_fd(gauge, dilate(g, 2.0, xs), step=2e-5), axis=-1)
        deg0 = float(np.max(np.abs(hg_d - hg)))
    else:
        h_an = gauge.hgrad(xs)
        h_fd = np.linalg.norm(frame_derivatives_fd(gauge, xs), axis=-1)
        fd_err = float(np.max(np.abs(h_an - h_fd)))
        deg0 = max(float(np.max(np.abs(gauge.hgrad(dilate(g, r, xs)) - h_an)))
                   for r in (0.5, 2.0, 3.0))
    viol["hgrad_fd_consistency"] = (fd_err, fd_tol)
    viol["hgrad_degree_zero"] = (deg0, degree_zero_tol)
    if g.Q != g.n:
        top = float(np.max(gauge.hgrad(xs)))
        viol["hgrad_at_most_one"] = (max(0.0, top - 1.0), 1e-6)

    worst = max(v / tol for v, tol in viol.values())
    meta = {k: v for k, (v, _) in viol.items()}
    meta.update({f"{k}_tol": tol for k, (_, tol) in viol.items()})
    return VerificationReport.bound(f"validate_gauge[{g.name}/{gauge.name}]", worst, 1.0,
                                    samples=len(x), **meta)
