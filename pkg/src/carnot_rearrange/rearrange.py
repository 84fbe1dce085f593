"""Gauge rearrangement ``u*(x) = nu~(||x||)``.

``nu~(r) = sup{t : nu_u(t) > V(r)}`` (with ``sup {} = 0``) is the radial
profile; ``V(r) = mu(B_r)`` is the volume function of the gauge balls.
"""
from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .errors import InputError, StructureError, TruncationError
from .fields import DistributionFunction, GridField, distribution_function, make_axes
from .gauges import Gauge


@dataclass(frozen=True, eq=False)
class VolumeFunction:
    gauge: Gauge
    c1: float
    Q_eff: float
    table_r: np.ndarray | None = None
    table_v: np.ndarray | None = None
    stderr: float = 0.0
    method: str = "exact"

    @property
    def homogeneous(self) -> bool:
        return self.table_r is None

    @property
    def max_volume(self) -> float:
        return math.inf if self.homogeneous else float(self.table_v[-1])

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.homogeneous:
            out = self.c1 * np.power(np.maximum(r, 0.0), self.Q_eff)
        else:
            if np.any(r > self.table_r[-1]):
                raise InputError(f"radius beyond tabulated range {self.table_r[-1]}")
            out = np.interp(r, self.table_r, self.table_v)
        return float(out) if out.ndim == 0 else out

    def inverse(self, v):
        return volume_inverse(self, v)


def volume_inverse(V: VolumeFunction, v):
    v = np.asarray(v, dtype=float)
    if np.any(v < 0) or np.any(v > V.max_volume * (1 + 1e-12)):
        raise InputError(f"volume {v} outside [0, {V.max_volume}]")
    if V.homogeneous:
        out = np.power(v / V.c1, 1.0 / V.Q_eff)
    else:
        out = np.interp(v, V.table_v, V.table_r)
    return float(out) if out.ndim == 0 else out


def _unit_ball_mc(gauge: Gauge, samples: int, seed: int, chunk: int = 1 << 20):
    ext = np.asarray(gauge.extent if gauge.extent is not None else (2.0,) * gauge.group.n) * 1.001
    box_vol = float(np.prod(2 * ext))
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        pts = rng.uniform(-ext, ext, (k, gauge.group.n))
        hits += int(np.count_nonzero(gauge.norm(pts) < 1.0))
        done += k
    p = hits / samples
    return box_vol * p, box_vol * math.sqrt(p * (1 - p) / samples)


def _unit_ball_grid(gauge: Gauge, nodes: int):
    # cell-centred nodes on the bounding box of B_1
    ext = np.asarray(gauge.extent) * 1.001
    axes = [(-e + (np.arange(nodes) + 0.5) * (2 * e / nodes)) for e in ext]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    cell = float(np.prod(2 * ext / nodes))
    return float(np.count_nonzero(gauge.norm(pts) < 1.0)) * cell


def volume_function(gauge: Gauge, density: Callable[[np.ndarray], np.ndarray] | None = None,
                    method: str = "auto", samples: int = 10 ** 7, seed: int = 0,
                    r_max: float = 2.0, n_radii: int = 257, nodes: int | None = None) -> VolumeFunction:
    """``V(r) = mu(B_r)``.

    Without a density, ``V(r) = c1 r^Q`` and ``c1`` comes from the closed form
    (``method="exact"``), Monte Carlo (``"mc"``) or cell-centred grid counting
    (``"quadrature"``); ``"auto"`` prefers the closed form.  With a density the
    function is tabulated on ``n_radii`` radii up to ``r_max`` by grid quadrature.
    """
    g = gauge.group
    if density is None:
        if method == "auto":
            method = "exact" if gauge.unit_volume is not None else "mc"
        if method == "exact":
            if gauge.unit_volume is None:
                raise InputError(f"no closed-form unit volume for gauge {gauge.name}")
            return VolumeFunction(gauge, float(gauge.unit_volume), float(g.Q), method="exact")
        if method == "mc":
            c1, err = _unit_ball_mc(gauge, samples, seed)
            return VolumeFunction(gauge, c1, float(g.Q), stderr=err, method="mc")
        if method == "quadrature":
            c1 = _unit_ball_grid(gauge, nodes or (801 if g.n == 1 else 401 if g.n == 2 else 161))
            return VolumeFunction(gauge, c1, float(g.Q), method="quadrature")
        raise InputError(f"unknown volume method {method!r}")

    k = nodes or (4001 if g.n == 1 else 401 if g.n == 2 else 129)
    ext = gauge.ball_extent(r_max) * 1.001
    axes = [(-e + (np.arange(k) + 0.5) * (2 * e / k)) for e in ext]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    cell = float(np.prod(2 * ext / k))
    rho = np.broadcast_to(np.asarray(density(pts), dtype=float), pts.shape[:-1]).ravel()
    if np.any(rho < 0):
        raise InputError("density must be nonnegative")
    nrm = gauge.norm(pts).ravel()
    order = np.argsort(nrm)
    cum = np.concatenate([[0.0], np.cumsum(rho[order])]) * cell
    radii = np.linspace(0.0, r_max, n_radii)
    vals = cum[np.searchsorted(nrm[order], radii, side="left")]
    if np.any(np.diff(vals) <= 0):
        bad = radii[1:][np.diff(vals) <= 0]
        raise StructureError(f"volume function not strictly increasing near r={bad[:3].tolist()}")
    c1 = float(np.interp(1.0, radii, vals)) if r_max >= 1 else float(vals[-1] / r_max ** g.Q)
    slope = np.polyfit(np.log(radii[1:]), np.log(vals[1:]), 1)[0]
    return VolumeFunction(gauge, c1, float(slope), radii, vals, method="tabulated")


def nu_tilde(dist: DistributionFunction, V: VolumeFunction, r):
    """``sup{t_k : nu(t_k) > V(r)}`` over the tabulated thresholds, ``0`` if empty."""
    v = np.asarray(V(r), dtype=float)
    # nu is nonincreasing, so {k : nu_k > v} is a prefix of length j
    j = np.searchsorted(-dist.measures, -v, side="left")
    out = np.where(j > 0, dist.thresholds[np.maximum(j - 1, 0)], 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class RearrangementProfile:
    """The radial profile ``nu~`` sampled on an increasing radius grid."""

    radii: np.ndarray
    profile: np.ndarray
    dist: DistributionFunction | None = None
    volume: VolumeFunction | None = None

    @property
    def support_radius(self) -> float:
        pos = np.nonzero(self.profile > 0)[0]
        return float(self.radii[pos[-1] + 1]) if len(pos) and pos[-1] + 1 < len(self.radii) else (
            float(self.radii[-1]) if len(pos) else 0.0)

    def exact(self, r):
        """Evaluate the sup-rule definition directly (right-continuous step function)."""
        if self.dist is None or self.volume is None:
            raise InputError("profile carries no distribution table")
        return nu_tilde(self.dist, self.volume, r)

    def linear(self, r):
        """Piecewise-linear interpolation of the tabulated profile."""
        return np.interp(r, self.radii, self.profile, right=0.0)


def profile_radii(dist: DistributionFunction, V: VolumeFunction, shells: int) -> np.ndarray:
    """Radii of ``shells`` equal-mass shells covering ``B_R`` with ``V(R) = nu(0)``."""
    nu0 = float(dist.measures[0])
    if nu0 <= 0:
        return np.array([0.0, 1.0])
    vols = np.linspace(0.0, nu0, shells + 1)
    return np.asarray(volume_inverse(V, vols))


def quantile_profile(field: GridField, V: VolumeFunction, radii) -> np.ndarray:
    """Sup-rule profile with every node value as a threshold (the K -> inf limit).

    With values sorted descending and running masses ``M_i``, the profile at
    mass ``m`` is the value of the first node with ``M_i > m``.
    """
    v = field.values.ravel()
    order = np.argsort(-v, kind="stable")
    w = np.broadcast_to(field.weights, field.shape).ravel()[order]
    M = np.cumsum(w)
    m = np.asarray(V(radii), dtype=float)
    i = np.searchsorted(M, m, side="right")
    out = np.where(i < len(M), v[order][np.minimum(i, len(M) - 1)], 0.0)
    return out


def spread_distribution(field: GridField) -> tuple[np.ndarray, np.ndarray]:
    """``nu(t)`` with each positive node's mass spread uniformly over its cell's value range.

    The range is ``u +- d/2`` with ``d = |(h_j d_j u)_j|`` (central differences),
    i.e. roughly the values the piecewise-linear interpolant takes in the
    node's cell; ``d = 0`` keeps a point mass.  Returns breakpoints ``t``
    (increasing) and ``nu`` there; ``nu`` is linear in between.
    """
    vals = field.values
    if min(field.shape) < 2:
        raise InputError("need at least 2 nodes per axis")
    d = np.gradient(vals, *field.spacing, edge_order=1)
    if field.group.n == 1:
        d = [d]
    step = np.sqrt(sum((dj * hj) ** 2 for dj, hj in zip(d, field.spacing))).ravel()
    v = vals.ravel()
    w = np.broadcast_to(field.weights, field.shape).ravel()
    pos = v > 0
    v, step, w = v[pos], step[pos], w[pos]
    if v.size == 0:
        return np.array([0.0]), np.array([0.0])
    total = float(np.sum(w))
    lo = np.maximum(v - step / 2, 0.0)
    hi = v + step / 2
    point = hi - lo <= 1e-14 * max(1.0, float(v.max()))
    rate = np.where(point, 0.0, w / np.where(point, 1.0, hi - lo))
    ts = np.unique(np.concatenate([[0.0], lo, hi, v[point]]))

    def ramp_sum(edges):
        # sum_i rate_i * max(t - edge_i, 0) for every t in ts
        order = np.argsort(edges)
        e, r = edges[order], rate[order]
        k = np.searchsorted(e, ts, side="left")
        cr = np.concatenate([[0.0], np.cumsum(r)])
        cre = np.concatenate([[0.0], np.cumsum(r * e)])
        return cr[k] * ts - cre[k]

    below = ramp_sum(lo) - ramp_sum(hi)
    pv = np.sort(v[point])
    pw = np.concatenate([[0.0], np.cumsum(w[point][np.argsort(v[point])])])
    below = below + pw[np.searchsorted(pv, ts, side="right")]
    return ts, np.maximum(total - below, 0.0)


def spread_profile(field: GridField, V: VolumeFunction, radii) -> np.ndarray:
    """Profile table from :func:`spread_distribution`: ``nu~(r) = nu^{-1}(V(r))``.

    Tied values on grid-aligned level sets (whole planes of nodes sharing one
    value) turn the node-count distribution into a staircase whose inverse
    alternates flat and steep shells; spreading each node over its cell's
    value range removes the staircase without moving mass by more than a cell.
    """
    ts, nu = spread_distribution(field)
    m = np.asarray(V(radii), dtype=float)
    if nu[0] <= 0:
        return np.zeros_like(m)
    # nu is nonincreasing; invert on the reversed arrays
    return np.interp(m, nu[::-1], ts[::-1], left=float(ts[-1]), right=0.0)


def midmass_profile(field: GridField, V: VolumeFunction, radii) -> np.ndarray:
    """Profile through the mass midpoints of the tied-value blocks.

    Each distinct node value ``v_j`` occupies a mass interval; the profile is
    linear between the points ``(midpoint_j, v_j)``, constant ``max u`` before
    the first midpoint and falls linearly to 0 at ``nu(0)``.  Grid-aligned
    level sets make many nodes share one value, and the plain quantile
    staircase then alternates flat and steep shells; this does not.
    """
    v = field.values.ravel()
    w = np.broadcast_to(field.weights, field.shape).ravel()
    pos = v > 0
    if not np.any(pos):
        return np.zeros(len(np.atleast_1d(radii)))
    vals, inv = np.unique(-v[pos], return_inverse=True)
    mass = np.bincount(inv, weights=w[pos])
    M = np.cumsum(mass)
    mid = M - 0.5 * mass
    xs = np.concatenate([mid, [M[-1]]])
    ys = np.concatenate([-vals, [0.0]])
    m = np.asarray(V(radii), dtype=float)
    return np.interp(m, xs, ys, left=-vals[0], right=0.0)


def default_shells(field: GridField, levels: int) -> int:
    """Equal-mass shell count for the profile table.

    Each shell should hold about 16 support nodes (2 in 1-D, where node
    counting is exactly periodic) and span about 8 thresholds, so the
    profile differences are not dominated by quantization.
    """
    support = int(np.count_nonzero(field.values > 0))
    per = 2 if field.group.n == 1 else 16
    return int(np.clip(min(support // per, levels // 8), 8, 1024))


def ball_grid(gauge: Gauge, R: float, axes, margin: float = 0.1, pad_nodes: int = 3):
    """Box around ``B_R`` on the lattice of ``axes`` (same spacing and phase)."""
    half = gauge.ball_extent(R) * (1 + margin)
    box, shape = [], []
    for e, ax in zip(half, axes):
        a, h = float(ax[0]), float(ax[1] - ax[0])
        k_lo = int(math.floor((-e - a) / h)) - pad_nodes
        k_hi = int(math.ceil((e - a) / h)) + pad_nodes
        box.append((a + k_lo * h, a + k_hi * h))
        shape.append(k_hi - k_lo + 1)
    return box, tuple(shape)


def rearrange_field(field: GridField, gauge: Gauge, out_box=None, out_shape=None,
                    levels: int = 512, V: VolumeFunction | None = None,
                    interpolation: str = "step", shells: int | None = None,
                    density_fn: Callable[[np.ndarray], np.ndarray] | None = None,
                    profile_values: str = "spread") -> tuple[GridField, RearrangementProfile]:
    """Rearrange ``field`` with respect to ``gauge`` and the field's measure.

    By default the output grid covers the support ball and continues the input
    lattice (same spacing and phase), which avoids systematic ties between
    node radii and the node-counted masses.
    ``interpolation="step"`` evaluates the sup-rule profile at every node;
    ``"linear"`` interpolates the equal-mass profile table, which is continuous
    and lies within one threshold step of the step profile for continuous inputs.
    The table (used for Psi) comes from ``profile_values``: ``"spread"``
    (:func:`spread_profile`), ``"midmass"`` (:func:`midmass_profile`),
    ``"quantile"`` (every node value a threshold) or ``"threshold"`` (the
    K-level sup rule).
    """
    if gauge.group is not field.group and gauge.group.name != field.group.name:
        raise InputError("field and gauge live on different groups")
    if field.density is not None and V is None:
        raise InputError("weighted fields need the volume function of their measure")
    V = V or volume_function(gauge)
    dist = distribution_function(field, levels)
    nu0 = float(dist.measures[0])
    R = float(volume_inverse(V, nu0)) if nu0 > 0 else 0.0
    if out_box is None and out_shape is None:
        out_box, out_shape = ball_grid(gauge, R, field.axes) if R > 0 and gauge.extent else (
            field.box, field.shape)
    elif out_box is None or out_shape is None:
        raise InputError("give both out_box and out_shape, or neither")
    axes = make_axes(out_box, out_shape)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    if R > 0:
        ext = gauge.ball_extent(R) if gauge.extent is not None else None
        if ext is not None:
            for (a, b), e in zip(out_box, ext):
                if a > -e or b < e:
                    raise TruncationError(
                        f"output box {list(out_box)} cannot hold B_R with R={R:.6g}", R)
    nrm = gauge.norm(pts)
    if shells is None:
        shells = default_shells(field, levels)
    radii = profile_radii(dist, V, shells)
    if profile_values == "spread":
        table = spread_profile(field, V, radii)
    elif profile_values == "midmass":
        table = midmass_profile(field, V, radii)
    elif profile_values == "quantile":
        table = quantile_profile(field, V, radii)
    elif profile_values == "threshold":
        table = np.asarray(nu_tilde(dist, V, radii))
    else:
        raise InputError(f"unknown profile_values {profile_values!r}")
    prof = RearrangementProfile(radii, table, dist, V)
    if interpolation == "step":
        vals = nu_tilde(dist, V, nrm)
    elif interpolation == "linear":
        vals = prof.linear(nrm)
    else:
        raise InputError(f"unknown interpolation {interpolation!r}")
    rho = None
    if field.density is not None:
        if density_fn is not None:
            rho = np.broadcast_to(np.asarray(density_fn(pts), dtype=float), nrm.shape).copy()
        elif tuple(out_shape) == field.shape and np.allclose(out_box, field.box):
            rho = field.density
        else:
            raise InputError("a weighted field rearranged onto a new grid needs density_fn")
    out = GridField(field.group, axes, np.asarray(vals, dtype=float), rho)
    return out, prof


@dataclass(frozen=True, eq=False)
class ProfileDerivative:
    radii: np.ndarray
    """cell edges; ``slope[i]`` belongs to ``[radii[i], radii[i+1])``"""
    slope: np.ndarray
    psi_hi: np.ndarray
    psi_lo: np.ndarray
    psi_values: np.ndarray
    """Psi on the value interval ``(psi_lo[j], psi_hi[j]]`` of each strictly decreasing cell"""

    def psi(self, v):
        """``Psi(v) = |nu~'|`` at the radius where the profile takes value ``v``; 0 off the table."""
        v = np.asarray(v, dtype=float)
        if len(self.psi_values) == 0:
            out = np.zeros_like(v)
        else:
            # value intervals are disjoint and sorted descending
            idx = np.searchsorted(-self.psi_hi, -v, side="right") - 1
            idx = np.clip(idx, 0, len(self.psi_values) - 1)
            inside = (v > self.psi_lo[idx]) & (v <= self.psi_hi[idx])
            out = np.where(inside, self.psi_values[idx], 0.0)
        return float(out) if out.ndim == 0 else out

    def psi_at_radius(self, r):
        """``Psi(nu~(r)) = |nu~'(r)|``, looked up by radius (no value ties)."""
        r = np.asarray(r, dtype=float)
        idx = np.searchsorted(self.radii, r, side="right") - 1
        ok = (idx >= 0) & (idx < len(self.slope))
        out = np.where(ok, -self.slope[np.clip(idx, 0, len(self.slope) - 1)], 0.0)
        return float(out) if out.ndim == 0 else out

    def radial_energy(self, V: VolumeFunction, p: float) -> float:
        """``int |nu~'(||x||)|^p dx`` summed over shells: ``|slope|^p (V(r_i+1) - V(r_i))``."""
        dv = np.diff(np.asarray(V(self.radii)))
        return float(np.sum(np.abs(self.slope) ** p * dv))


def profile_derivative(profile: RearrangementProfile) -> ProfileDerivative:
    """Forward differences of the profile on its radius grid, plus the Psi table."""
    r = np.asarray(profile.radii, dtype=float)
    v = np.asarray(profile.profile, dtype=float)
    dr = np.diff(r)
    dv = np.diff(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(dr > 0, dv / np.where(dr > 0, dr, 1.0), 0.0)
    slope = np.minimum(slope, 0.0)
    dec = np.nonzero((dv < 0) & (dr > 0))[0]
    return ProfileDerivative(r, slope, v[dec], v[dec + 1], -slope[dec])
