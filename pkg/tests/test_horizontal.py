import math

import numpy as np
import pytest

from carnot_rearrange.errors import InputError
from carnot_rearrange.fields import build_field, grid_field
from carnot_rearrange.gauges import get_gauge
from carnot_rearrange.horizontal import (
    ball_shape,
    bv_norm,
    coarea_check,
    energy,
    horizontal_gradient,
    horizontal_perimeter,
    isoperimetric_scan,
    perimeter_homogeneity_check,
    polar_integrate,
    preimage_node_count,
    sphere_quadrature,
    sphere_weight_integral,
)
from carnot_rearrange.rearrange import volume_function
from carnot_rearrange.verify import default_set_family


@pytest.fixture(scope="module")
def e2(R2):
    return get_gauge("euclidean", R2)


@pytest.fixture(scope="module")
def quad_k(koranyi):
    return sphere_quadrature(koranyi)


def cone2(R2, nodes=201):
    return grid_field(R2, [(-1.2, 1.2)] * 2, (nodes, nodes),
                      lambda p: np.maximum(0.0, 1 - np.linalg.norm(p, axis=-1)))


# --- gradient and BV norm ------------------------------------------------------

def test_tent_gradient(tent_field):
    grad = horizontal_gradient(tent_field)
    x = tent_field.axes[0]
    away = (np.abs(x) > 0.05) & (np.abs(np.abs(x) - 1) > 0.05)
    assert np.allclose(grad.norm[(np.abs(x) < 1) & away], 1.0)
    assert np.all(grad.norm[np.abs(x) > 1.05] == 0.0)


def test_heisenberg_gradient_of_t(H1):
    # u = t + 2 keeps the field nonnegative; D_h u = (-y/2, x/2)
    u = grid_field(H1, [(1.0, 3.0), (-1.0, 1.0), (-1.0, 1.0)], (21, 21, 21),
                   lambda p: p[..., 2] + 2.0)
    grad = horizontal_gradient(u)
    i = int(np.argmin(np.abs(u.axes[0] - 2.0)))
    j = int(np.argmin(np.abs(u.axes[1])))
    k = int(np.argmin(np.abs(u.axes[2])))
    assert grad.norm[i, j, k] == pytest.approx(1.0, abs=1e-12)
    pts = u.points()
    assert np.allclose(grad.norm, np.hypot(pts[..., 0], pts[..., 1]) / 2, atol=1e-12)


def test_constant_interior_gradient(R2):
    u = grid_field(R2, [(-2, 2)] * 2, (41, 41),
                   lambda p: 3.0 * (np.max(np.abs(p), axis=-1) < 1.5))
    grad = horizontal_gradient(u)
    inner = np.max(np.abs(u.points()), axis=-1) < 1.2
    assert np.all(grad.norm[inner] == 0.0)


def test_coarse_grid_rejected(R1):
    u = grid_field(R1, [(0, 1)], (2,), lambda p: 0 * p[..., 0])
    with pytest.raises(InputError):
        horizontal_gradient(u)


def test_bv_tent(tent_field):
    assert bv_norm(tent_field) == pytest.approx(2.0, rel=0.01)


def test_bv_zero(R2):
    assert bv_norm(build_field("zero", R2, 33)) == 0.0


def test_bv_heisenberg_cone_matches_polar(cone_field, koranyi, quad_k):
    # |D_h (1 - ||x||)| is the gauge weight, integrated over B_1
    polar = polar_integrate(lambda p: koranyi.hgrad(p), koranyi, 1.0, quad=quad_k)
    assert bv_norm(cone_field) == pytest.approx(polar, rel=0.02)


def test_energy_p2_plane_cone(R2):
    # |Du| = 1 on the unit disk
    assert energy(cone2(R2), 2.0) == pytest.approx(math.pi, rel=0.02)


# --- perimeters --------------------------------------------------------------

def test_disk_perimeter(R2):
    u = cone2(R2)
    assert horizontal_perimeter(u, 0.5).value == pytest.approx(math.pi, rel=0.03)
    # the support itself, {u > 0} = unit disk
    assert horizontal_perimeter(u, 0.0).value == pytest.approx(
        2 * math.pi, rel=0.03)


def test_perimeter_above_max(R2):
    u = cone2(R2)
    assert horizontal_perimeter(u, 1.0).value == 0.0
    assert horizontal_perimeter(u, 2.0, method="coarea-slice").value == 0.0


def test_coarea_slice_agrees(R2):
    u = cone2(R2)
    a = horizontal_perimeter(u, 0.4).value
    b = horizontal_perimeter(u, 0.4, method="coarea-slice").value
    assert a == pytest.approx(b, rel=0.03)
    assert a == pytest.approx(2 * math.pi * 0.6, rel=0.03)


def test_homogeneity_plane(R2, e2):
    rep = perimeter_homogeneity_check(R2, e2, (1, 2, 4), nodes=256, tolerance=0.02)
    assert rep.passed, rep.line()


def test_homogeneity_koranyi(H1, koranyi):
    rep = perimeter_homogeneity_check(H1, koranyi, (1, 1.5, 2), nodes=96)
    assert rep.passed, rep.line()
    assert rep.lhs == pytest.approx(3.0, rel=0.05)


def test_homogeneity_carnot_ratio(H1, carnot):
    rep = perimeter_homogeneity_check(H1, carnot, (1, 2), nodes=96)
    assert rep.meta["ratio_last_first"] == pytest.approx(8.0, rel=0.05)


def test_homogeneity_line(R1):
    rep = perimeter_homogeneity_check(R1, get_gauge("euclidean", R1), (1, 2, 3), nodes=301)
    assert rep.passed and rep.lhs == pytest.approx(0.0, abs=0.05)


# --- coarea ------------------------------------------------------------------

def test_coarea_tent(tent_field):
    rep = coarea_check(tent_field, tolerance=0.02)
    assert rep.passed, rep.line()
    assert rep.rhs == pytest.approx(2.0, rel=0.01)


def test_coarea_zero(R2):
    rep = coarea_check(build_field("zero", R2, 17))
    assert rep.passed and rep.lhs == 0.0 and rep.rhs == 0.0


def test_coarea_heisenberg_cone(cone_field):
    rep = coarea_check(cone_field, tolerance=0.05)
    assert rep.passed, rep.line()


def test_coarea_needs_slices(tent_field):
    with pytest.raises(InputError):
        coarea_check(tent_field, K=4)


# --- polar coordinates ---------------------------------------------------------

def test_polar_volume(koranyi, quad_k):
    c1 = volume_function(koranyi).c1
    assert polar_integrate(lambda p: np.ones(p.shape[:-1]), koranyi, 1.3, quad=quad_k) == \
        pytest.approx(c1 * 1.3 ** 4, rel=0.01)


def test_polar_plane_norm(e2):
    val = polar_integrate(lambda p: np.linalg.norm(p, axis=-1), e2, 1.0)
    assert val == pytest.approx(2 * math.pi / 3, rel=0.01)


@pytest.mark.parametrize("gid", ["koranyi", "carnot", "box"])
def test_sigma_is_Q_c1(H1, gid):
    gauge = get_gauge(gid, H1)
    quad = sphere_quadrature(gauge)
    assert quad.sigma == pytest.approx(4 * volume_function(gauge).c1, rel=0.02)


def test_sphere_quadrature_deterministic(koranyi):
    a, b = sphere_quadrature(koranyi, seed=7), sphere_quadrature(koranyi, seed=7)
    assert a.sigma == b.sigma and np.array_equal(a.points, b.points)


# --- sphere weight integral ------------------------------------------------------

@pytest.mark.parametrize("R", [1.0, 2.0])
def test_sphere_weight_euclidean(R2, e2, R):
    rep = sphere_weight_integral(e2, R, nodes=200)
    assert rep.passed, rep.line()
    assert rep.lhs == pytest.approx(2 * math.pi * R, rel=0.03)


@pytest.mark.parametrize("R", [1.0, 2.0])
def test_sphere_weight_koranyi(koranyi, quad_k, R):
    rep = sphere_weight_integral(koranyi, R, nodes=96, quad=quad_k)
    assert rep.passed, rep.line()
    assert rep.meta["excluded_fraction"] < 0.01


def test_sphere_weight_carnot(carnot):
    rep = sphere_weight_integral(carnot, 1.0, nodes=96)
    assert rep.passed, rep.line()
    # weight 1: the left side is the perimeter itself
    assert rep.lhs == pytest.approx(rep.meta["perimeter"], rel=1e-6)


def test_preimage_node_count(tent_field):
    x = tent_field.axes[0]
    brute = int(np.sum((tent_field.values > 0.2) & (tent_field.values < 0.6)))
    assert preimage_node_count(tent_field, 0.2, 0.6) == brute
    assert brute == pytest.approx(0.8 / (x[1] - x[0]), abs=2)


def test_isoperimetric_scan_disk_is_best(R2, e2):
    rows = isoperimetric_scan(R2, default_set_family(R2, e2), nodes=128)
    assert rows[0]["set"].startswith("ball")
    best = max(r["ratio"] for r in rows)
    assert rows[0]["ratio"] == pytest.approx(best, rel=0.03)
    assert rows[0]["ratio"] == pytest.approx(1 / (2 * math.sqrt(math.pi)), rel=0.03)


def test_ball_shape_measure(H1, koranyi):
    from carnot_rearrange.horizontal import shape_measure_and_perimeter
    vol, per = shape_measure_and_perimeter(ball_shape(koranyi, 1.0), H1, nodes=64)
    assert vol == pytest.approx(volume_function(koranyi).c1, rel=0.02)
    assert per > 0
