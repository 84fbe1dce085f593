"""Nonnegative compactly supported fields sampled on uniform grids.

Quadrature is the node-sampled midpoint rule: node ``k`` carries the measure
``rho(k) * prod(h_i)``.
"""
from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .groups import GroupSpec

Box = Sequence[tuple[float, float]]


@dataclass(frozen=True, eq=False)
class GridField:
    group: GroupSpec
    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    density: np.ndarray | None = None

    def __post_init__(self):
        if len(self.axes) != self.group.n:
            raise InputError(f"need {self.group.n} axes, got {len(self.axes)}")
        shape = tuple(len(a) for a in self.axes)
        if self.values.shape != shape:
            raise InputError(f"values shape {self.values.shape} != grid shape {shape}")
        if min(shape) < 2:
            raise InputError("every axis needs at least 2 nodes")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise InputError("field values must be finite and nonnegative")
        if self.density is not None:
            if self.density.shape != shape:
                raise InputError("density shape must match the grid")
            if np.any(self.density < 0) or not np.all(np.isfinite(self.density)):
                raise InputError("density must be finite and nonnegative")
        for a in self.axes:
            d = np.diff(a)
            if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-9, atol=0):
                raise InputError("grid axes must be uniform and increasing")
        self.values.setflags(write=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def spacing(self) -> np.ndarray:
        return np.array([a[1] - a[0] for a in self.axes])

    @property
    def box(self) -> list[tuple[float, float]]:
        return [(float(a[0]), float(a[-1])) for a in self.axes]

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def weights(self) -> np.ndarray | float:
        """Per-node measure ``rho * cell`` (a scalar when rho is absent)."""
        if self.density is None:
            return self.cell_volume
        return self.density * self.cell_volume

    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def total_mass(self) -> float:
        if self.density is None:
            return self.cell_volume * self.values.size
        return float(np.sum(self.density) * self.cell_volume)

    def with_values(self, values: np.ndarray) -> GridField:
        return GridField(self.group, self.axes, np.asarray(values, dtype=float), self.density)

    def boundary_max(self) -> float:
        """Largest value on the outer layer of nodes (0 for compact support)."""
        v = self.values
        out = 0.0
        for ax in range(v.ndim):
            out = max(out, float(np.max(np.take(v, [0, -1], axis=ax))))
        return out


def make_axes(box: Box, shape: Sequence[int]) -> tuple[np.ndarray, ...]:
    if len(box) != len(shape):
        raise InputError("box and shape dimension mismatch")
    axes = []
    for (a, b), k in zip(box, shape):
        if not b > a or k < 2:
            raise InputError(f"bad axis [{a}, {b}] with {k} nodes")
        axes.append(np.linspace(a, b, int(k)))
    return tuple(axes)


def grid_field(group: GroupSpec, box: Box, shape: Sequence[int], fn: Callable[[np.ndarray], np.ndarray],
               density: Callable[[np.ndarray], np.ndarray] | None = None) -> GridField:
    """Sample ``fn`` (and optionally ``density``) at the nodes of a uniform grid."""
    axes = make_axes(box, shape)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = np.asarray(fn(pts), dtype=float)
    rho = None if density is None else np.broadcast_to(np.asarray(density(pts), dtype=float), vals.shape).copy()
    return GridField(group, axes, vals, rho)


# --- quadrature ---------------------------------------------------------------

def integrate(field: GridField, transform: Callable[[np.ndarray], np.ndarray] = lambda s: s) -> float:
    """Midpoint quadrature of ``phi(u)`` against mu; requires ``phi(0) = 0``."""
    if float(np.asarray(transform(np.zeros(1)))[0]) != 0.0:
        raise InputError("transform must satisfy phi(0) = 0 (the integral off the box would diverge)")
    return float(np.sum(transform(field.values) * field.weights))


def superlevel_measure(field: GridField, t: float) -> float:
    """mu({u > t}) by strict node counting."""
    if t < 0:
        raise InputError("threshold must be >= 0")
    mask = field.values > t
    if field.density is None:
        return float(np.count_nonzero(mask) * field.cell_volume)
    return float(np.sum(field.density[mask]) * field.cell_volume)


@dataclass(frozen=True, eq=False)
class DistributionFunction:
    """Tabulated ``nu(t) = mu({u > t})`` on a uniform threshold grid."""

    thresholds: np.ndarray
    measures: np.ndarray
    total_mass: float

    def __call__(self, t) -> np.ndarray | float:
        """Right-continuous step evaluation: value at the largest tabulated t_k <= t."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.thresholds, t, side="right") - 1
        out = np.where(idx < 0, self.measures[0],
                       np.where(t > self.thresholds[-1], 0.0,
                                self.measures[np.clip(idx, 0, len(self.measures) - 1)]))
        return float(out) if out.ndim == 0 else out

    @property
    def ess_sup(self) -> float:
        pos = np.nonzero(self.measures > 0)[0]
        return float(self.thresholds[pos[-1]]) if len(pos) else 0.0


def distribution_function(field: GridField, levels: int = 512) -> DistributionFunction:
    if levels < 2:
        raise InputError("need at least 2 levels")
    top = float(field.values.max())
    t = np.linspace(0.0, top, int(levels))
    v = field.values.ravel()
    order = np.argsort(v, kind="stable")
    sv = v[order]
    # nodes strictly above t are sv[j:] with j = searchsorted(right)
    j = np.searchsorted(sv, t, side="right")
    if field.density is None:
        nu = (v.size - j) * field.cell_volume
    else:
        w = field.density.ravel()[order]
        tail = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
        nu = tail[j] * field.cell_volume
    nu = np.minimum.accumulate(np.maximum(nu, 0.0))
    return DistributionFunction(t, nu, field.total_mass())


# --- analytic builders --------------------------------------------------------
#
# Each builder returns (fn, support) where support is a coordinate box that
# contains {u > 0}.

def _box_around(center, half):
    return [(float(c - h), float(c + h)) for c, h in zip(center, half)]


def _union_box(boxes):
    return [(min(b[i][0] for b in boxes), max(b[i][1] for b in boxes)) for i in range(len(boxes[0]))]


def _zero(g, gauge=None, half_width=1.0):
    def fn(p):
        return np.zeros(p.shape[:-1])
    return fn, _box_around(np.zeros(g.n), [half_width] * g.n)


def _tent(g, gauge=None, width=1.0, height=1.0):
    def fn(p):
        return height * np.maximum(0.0, 1.0 - np.linalg.norm(p, axis=-1) / width)
    return fn, _box_around(np.zeros(g.n), [width] * g.n)


def _plateaus(g, gauge=None, intervals=((-1.5, -0.5, 2.0), (0.25, 1.25, 1.0))):
    """Indicator plateaus ``(a, b, height)`` along the first axis; 1-D only."""
    if g.n != 1:
        raise InputError("plateaus builder is one-dimensional")

    def fn(p):
        x = p[..., 0]
        out = np.zeros(x.shape)
        for a, b, hgt in intervals:
            out = out + hgt * ((x >= a) & (x < b))
        return out
    return fn, [(min(a for a, _, _ in intervals), max(b for _, b, _ in intervals))]


def _pyramid(g, gauge=None, half_widths=None, center=None, height=1.0):
    """``1 - max_i |x_i - c_i| / a_i``: superlevel sets are coordinate boxes."""
    hw = np.asarray(half_widths if half_widths is not None else (1.0, 0.6, 0.3)[:g.n], float)
    c = np.asarray(center if center is not None else (0.2, -0.1, 0.05)[:g.n], float)

    def fn(p):
        return height * np.maximum(0.0, 1.0 - np.max(np.abs(p - c) / hw, axis=-1))
    return fn, _box_around(c, hw)


def _ellipsoid(g, gauge=None, semi_axes=None, power=1.5, center=None):
    a = np.asarray(semi_axes if semi_axes is not None else (1.2, 0.7, 0.35)[:g.n], float)
    c = np.zeros(g.n) if center is None else np.asarray(center, float)

    def fn(p):
        r = np.sqrt(np.sum(((p - c) / a) ** 2, axis=-1))
        return np.maximum(0.0, 1.0 - r) ** power
    return fn, _box_around(c, a)


def _gaussian(g, gauge=None, sigma=None, cutoff=2.0, center=None):
    """Gaussian shifted down to vanish on the ellipsoid at ``cutoff`` sigmas."""
    s = np.asarray(sigma if sigma is not None else (0.5, 0.35, 0.15)[:g.n], float)
    c = np.zeros(g.n) if center is None else np.asarray(center, float)
    floor = math.exp(-0.5 * cutoff ** 2)

    def fn(p):
        q = np.sum(((p - c) / s) ** 2, axis=-1)
        return np.maximum(0.0, np.exp(-0.5 * q) - floor) / (1 - floor)
    return fn, _box_around(c, cutoff * s)


def _translated_ball_box(g, gauge, center, radius):
    ext = gauge.ball_extent(radius)
    c = np.asarray(center, float)
    if g.Q == g.n:
        return _box_around(c, ext)
    # H^1: c.p = (cx + x, cy + y, ct + t + (cx y - cy x) / 2)
    tw = ext[2] + 0.5 * (abs(c[0]) * ext[1] + abs(c[1]) * ext[0])
    return _box_around(c, [ext[0], ext[1], tw])


def _cone(g, gauge, radius=1.0, height=1.0, center=None, power=1.0):
    """``height * max(0, 1 - ||c^-1 p|| / radius)^power``, a left-translated gauge cone."""
    if gauge is None:
        raise InputError("cone builder needs a gauge")
    c = None if center is None else np.asarray(center, float)

    def fn(p):
        q = p if c is None else g.group_law(g.inverse(c), p)
        return height * np.maximum(0.0, 1.0 - gauge.norm(q) / radius) ** power
    return fn, _translated_ball_box(g, gauge, np.zeros(g.n) if c is None else c, radius)


def _two_bump(g, gauge, centers=None, radii=(0.7, 0.5), heights=(1.0, 0.6)):
    """Maximum of two left-translated gauge cones with disjoint supports."""
    if centers is None:
        centers = [(-0.8, 0.0, 0.0)[:g.n], (0.75, 0.25, 0.02)[:g.n]]
    parts = [_cone(g, gauge, r, hgt, c) for c, r, hgt in zip(centers, radii, heights)]

    def fn(p):
        return np.maximum.reduce([f(p) for f, _ in parts])
    return fn, _union_box([b for _, b in parts])


BUILDERS = {
    "zero": _zero,
    "tent": _tent,
    "plateaus": _plateaus,
    "pyramid": _pyramid,
    "ellipsoid": _ellipsoid,
    "gaussian": _gaussian,
    "cone": _cone,
    "two_bump": _two_bump,
}


def builder_support(name: str, group: GroupSpec, gauge=None, **params):
    fn, support = _lookup(name)(group, gauge, **params)
    return fn, support


def _lookup(name):
    try:
        return BUILDERS[name]
    except KeyError:
        raise InputError(f"unknown field builder {name!r}; known: {sorted(BUILDERS)}") from None


def padded_box(support, margin: float = 0.1, min_pad: float = 0.0):
    """Grow each axis of ``support`` by ``margin`` of its width."""
    out = []
    for a, b in support:
        pad = max(margin * (b - a), min_pad)
        out.append((a - pad, b + pad))
    return out


def build_field(name: str, group: GroupSpec, shape: Sequence[int] | int, gauge=None,
                box: Box | None = None, density: Callable | None = None, **params) -> GridField:
    """Sample a named analytic field on a grid padded around its support."""
    fn, support = _lookup(name)(group, gauge, **params)
    if isinstance(shape, int):
        shape = (shape,) * group.n
    if box is None:
        box = padded_box(support)
    return grid_field(group, box, shape, fn, density)
