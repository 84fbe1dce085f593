"""Carnot groups in exponential coordinates: group law, dilations, horizontal frame.

Points are numpy arrays whose last axis has length ``n``; every operation
broadcasts over leading axes.
"""
from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .reports import VerificationReport

Law = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GroupSpec:
    name: str
    n: int
    m: int
    Q: int
    dilation_weights: tuple[int, ...]
    group_law: Law
    inverse: Callable[[np.ndarray], np.ndarray]
    frame: Callable[[np.ndarray], np.ndarray]
    """``frame(p)`` returns an array of shape ``(..., m, n)``; row i is X_i(p)."""

    def __post_init__(self):
        if not (1 <= self.m <= self.n):
            raise InputError(f"horizontal rank m={self.m} must satisfy 1 <= m <= n={self.n}")
        if len(self.dilation_weights) != self.n or any(w <= 0 for w in self.dilation_weights):
            raise InputError("need n positive dilation weights")
        if sum(self.dilation_weights) != self.Q:
            raise InputError(
                f"sum of dilation weights {sum(self.dilation_weights)} != Q={self.Q}")

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.dilation_weights, dtype=float)

    def check_point(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.ndim == 0 or p.shape[-1] != self.n:
            raise InputError(f"{self.name}: expected points with last axis {self.n}, got shape {p.shape}")
        return p


def group_multiply(g: GroupSpec, a, b) -> np.ndarray:
    a, b = g.check_point(a), g.check_point(b)
    return g.group_law(a, b)


def dilate(g: GroupSpec, r, p) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise InputError(f"dilation factor must be positive, got {r}")
    p = g.check_point(p)
    return p * np.power(r[..., None], g.weights)


def horizontal_frame_at(g: GroupSpec, p) -> np.ndarray:
    return g.frame(g.check_point(p))


# --- concrete groups -------------------------------------------------------

def _euclid_frame(n):
    def frame(p):
        return np.broadcast_to(np.eye(n), p.shape[:-1] + (n, n)).copy()
    return frame


def euclidean(n: int) -> GroupSpec:
    return GroupSpec(
        name=f"euclidean{n}", n=n, m=n, Q=n, dilation_weights=(1,) * n,
        group_law=lambda a, b: a + b, inverse=lambda a: -a, frame=_euclid_frame(n))


def _heis_law(a, b):
    a, b = np.broadcast_arrays(a, b)
    x, y, t = a[..., 0], a[..., 1], a[..., 2]
    xp, yp, tp = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([x + xp, y + yp, t + tp + 0.5 * (x * yp - y * xp)], axis=-1)


def _heis_frame(p):
    x, y = p[..., 0], p[..., 1]
    one, zero = np.ones_like(x), np.zeros_like(x)
    X1 = np.stack([one, zero, -0.5 * y], axis=-1)
    X2 = np.stack([zero, one, 0.5 * x], axis=-1)
    return np.stack([X1, X2], axis=-2)


def heisenberg1() -> GroupSpec:
    # exponential coordinates: Lebesgue measure is Haar measure
    return GroupSpec(
        name="heisenberg1", n=3, m=2, Q=4, dilation_weights=(1, 1, 2),
        group_law=_heis_law, inverse=lambda a: -a, frame=_heis_frame)


_REGISTRY: dict[str, Callable[[], GroupSpec]] = {
    "euclidean1": lambda: euclidean(1),
    "euclidean2": lambda: euclidean(2),
    "euclidean3": lambda: euclidean(3),
    "heisenberg1": heisenberg1,
}


def get_group(group_id: str) -> GroupSpec:
    try:
        return _REGISTRY[group_id]()
    except KeyError:
        raise InputError(f"unknown group id {group_id!r}; known: {sorted(_REGISTRY)}") from None


def group_ids() -> list[str]:
    return sorted(_REGISTRY)


def corrupted_group(base: GroupSpec, amount: float = 0.1) -> GroupSpec:
    """Negative control: the base law plus ``amount * x_1^2 * y_2`` in the last coordinate.

    The extra term is neither bilinear nor dilation-homogeneous, so
    associativity and the dilation homomorphism both break.
    """
    def law(a, b):
        out = np.array(base.group_law(a, b), dtype=float, copy=True)
        out[..., -1] += amount * a[..., 0] ** 2 * b[..., min(1, base.n - 1)]
        return out
    return GroupSpec(f"{base.name}-corrupted", base.n, base.m, base.Q, base.dilation_weights,
                     law, base.inverse, base.frame)


# --- self-test ----------------------------------------------------------------

def left_translation_pushforward(g: GroupSpec, a: np.ndarray, p: np.ndarray,
                                 v: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """d(L_a)_p v by central differences of the group law."""
    return (g.group_law(a, p + step * v) - g.group_law(a, p - step * v)) / (2 * step)


def validate_group(g: GroupSpec, samples: int = 1000, tol: float = 1e-10,
                   frame_tol: float = 1e-6, seed: int = 0) -> VerificationReport:
    """Check associativity, identity, inverse, dilation homomorphism and frame invariance.

    The returned report compares the worst algebraic violation to ``tol``; the
    left-invariance residual (finite differences, step 1e-5) is judged against
    ``frame_tol`` and folded into the same pass flag.
    """
    if samples < 1:
        raise InputError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    a, b, c = (rng.uniform(-3, 3, (samples, g.n)) for _ in range(3))
    r = rng.uniform(0.25, 4.0, samples)
    s = rng.uniform(0.25, 4.0, samples)
    zero = np.zeros(g.n)
    law = g.group_law

    def scale(x, rr):
        return x * np.power(rr[:, None], g.weights)

    def rel(u, v):
        return np.max(np.abs(u - v) / (1.0 + np.abs(v)), axis=-1)

    viol = {
        "associativity": rel(law(law(a, b), c), law(a, law(b, c))),
        "identity": np.maximum(rel(law(a, zero), a), rel(law(zero, a), a)),
        "inverse": np.max(np.abs(law(a, g.inverse(a))), axis=-1),
        "dilation_homomorphism": rel(scale(law(a, b), r), law(scale(a, r), scale(b, r))),
        "dilation_composition": rel(scale(scale(a, s), r), scale(a, r * s)),
    }
    maxima = {k: float(np.max(v)) for k, v in viol.items()}

    frame_a = g.frame(b)
    frame_ab = g.frame(law(a, b))
    pushed = np.stack([left_translation_pushforward(g, a, b, frame_a[:, i, :])
                       for i in range(g.m)], axis=1)
    frame_res = float(np.max(np.abs(frame_ab - pushed)))
    worst = max(maxima.values())
    rep = VerificationReport.bound(f"validate_group[{g.name}]", worst, tol,
                                   samples=samples, frame_tol=frame_tol,
                                   frame_violation=frame_res, **maxima)
    if frame_res > frame_tol:
        rep.passed = False
    return rep
