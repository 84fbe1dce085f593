import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carnot_rearrange.errors import InputError, TruncationError
from carnot_rearrange.fields import (
    build_field,
    distribution_function,
    grid_field,
    integrate,
)
from carnot_rearrange.gauges import get_gauge
from carnot_rearrange.groups import get_group
from carnot_rearrange.rearrange import (
    RearrangementProfile,
    nu_tilde,
    profile_derivative,
    rearrange_field,
    volume_function,
    volume_inverse,
)


@pytest.fixture(scope="module")
def e1(R1):
    return get_gauge("euclidean", R1)


@pytest.fixture(scope="module")
def e2(R2):
    return get_gauge("euclidean", R2)


# --- volume function ---------------------------------------------------------

def test_disk_volume(e2):
    V = volume_function(e2)
    assert V(1.0) == pytest.approx(math.pi)
    assert V(2.0) == pytest.approx(4 * math.pi)
    mc = volume_function(e2, method="mc", samples=10 ** 6, seed=0)
    assert abs(mc.c1 - math.pi) <= 4 * mc.stderr


def test_koranyi_volume_two_methods(koranyi):
    mc = volume_function(koranyi, method="mc", samples=4 * 10 ** 6, seed=1)
    quad = volume_function(koranyi, method="quadrature")
    assert mc.c1 == pytest.approx(quad.c1, rel=0.005)
    assert volume_function(koranyi).c1 == pytest.approx(quad.c1, rel=0.005)


def test_line_volume_with_unit_density(e1):
    V = volume_function(e1, density=lambda p: np.ones(p.shape[:-1]), r_max=2.0)
    r = np.array([0.25, 0.5, 1.0, 1.75])
    # node counting on a 4001-node table: error within two cells
    assert np.allclose(V(r), 2 * r, atol=2.5e-3)
    assert V.Q_eff == pytest.approx(1.0, rel=1e-3)


def test_degenerate_density_rejected(e1):
    from carnot_rearrange.errors import StructureError
    with pytest.raises(StructureError):
        volume_function(e1, density=lambda p: (np.abs(p[..., 0]) > 0.5).astype(float))


def test_volume_inverse(e2, koranyi):
    V = volume_function(e2)
    assert volume_inverse(V, 0.0) == 0.0
    assert volume_inverse(V, math.pi) == pytest.approx(1.0)
    K = volume_function(koranyi)
    assert volume_inverse(K, 16 * K.c1) == pytest.approx(2.0)
    with pytest.raises(InputError):
        volume_inverse(V, -1.0)


# --- profile -----------------------------------------------------------------

def test_tent_profile(tent_field, e1):
    dist = distribution_function(tent_field, 512)
    V = volume_function(e1)
    r = np.linspace(0.05, 0.95, 19)
    h = tent_field.spacing[0]
    assert np.max(np.abs(nu_tilde(dist, V, r) - (1 - r))) <= 2 * (h + 1 / 512)
    assert nu_tilde(dist, V, 5.0) == 0.0
    assert nu_tilde(dist, V, 0.0) == pytest.approx(dist.ess_sup)
    assert dist.ess_sup == pytest.approx(1.0, abs=1 / 511 + 1e-12)


def test_profile_is_nonincreasing(two_bump_field, koranyi):
    _, prof = rearrange_field(two_bump_field, koranyi)
    assert np.all(np.diff(prof.profile) <= 1e-12)
    r = np.linspace(0, prof.radii[-1], 300)
    assert np.all(np.diff(prof.exact(r)) <= 0)


# --- rearrange_field ---------------------------------------------------------

def test_tent_fixed_point(tent_field, e1):
    ustar, _ = rearrange_field(tent_field, e1, out_box=tent_field.box, out_shape=tent_field.shape)
    h = tent_field.spacing[0]
    assert np.max(np.abs(ustar.values - tent_field.values)) <= 2 * (h + 1 / 512)


def test_plateaus_become_nested_intervals(R1, e1):
    # heights 2 on a width-1 interval, 1 on a width-1 interval
    u = build_field("plateaus", R1, 601, box=[(-3, 3)])
    ustar, _ = rearrange_field(u, e1, out_box=[(-3, 3)], out_shape=(601,))
    x = ustar.axes[0]
    h = x[1] - x[0]
    w2, w1 = 1.0, 1.0
    inner = np.abs(x) < w2 / 2 - 2 * h
    ring = (np.abs(x) > w2 / 2 + 2 * h) & (np.abs(x) < (w1 + w2) / 2 - 2 * h)
    outside = np.abs(x) > (w1 + w2) / 2 + 2 * h
    assert np.all(ustar.values[inner] == pytest.approx(2.0, abs=2 / 511 + 1e-12))
    assert np.all(ustar.values[ring] == pytest.approx(1.0, abs=2 / 512))
    assert np.all(ustar.values[outside] == 0.0)


def test_zero_field(R2, e2):
    u = build_field("zero", R2, 21)
    ustar, prof = rearrange_field(u, e2)
    assert np.all(ustar.values == 0)
    assert np.all(prof.profile == 0)


def test_truncation_error(tent_field, e1):
    with pytest.raises(TruncationError) as exc:
        rearrange_field(tent_field, e1, out_box=[(-0.5, 0.5)], out_shape=(64,))
    assert exc.value.required_radius == pytest.approx(1.0, abs=0.02)


def test_level_sets_are_balls(two_bump_field, koranyi):
    ustar, _ = rearrange_field(two_bump_field, koranyi)
    nrm = koranyi.norm(ustar.points()).ravel()
    vals = ustar.values.ravel()[np.argsort(nrm, kind="stable")]
    # a function of the gauge alone, nonincreasing in it
    assert np.all(np.diff(vals) <= 0)


def test_idempotent(R2, e2):
    u = build_field("pyramid", R2, 96)
    u1, _ = rearrange_field(u, e2)
    u2, _ = rearrange_field(u1, e2, out_box=u1.box, out_shape=u1.shape)
    h = float(np.max(u1.spacing))
    assert np.max(np.abs(u2.values - u1.values)) <= 2 * (h + u1.values.max() / 512) * 2


def test_equimeasurable_heisenberg(two_bump_field, koranyi):
    ustar, _ = rearrange_field(two_bump_field, koranyi)
    for phi in (lambda s: s, np.square, lambda s: np.minimum(s, 1.0)):
        assert integrate(ustar, phi) == pytest.approx(integrate(two_bump_field, phi), rel=0.01)


def test_weighted_needs_volume(R1, e1):
    u = grid_field(R1, [(-1.5, 1.5)], (65,), lambda p: np.maximum(0, 1 - np.abs(p[..., 0])),
                   density=lambda p: 1 + 0 * p[..., 0])
    with pytest.raises(InputError):
        rearrange_field(u, e1)


def test_unknown_profile_values(tent_field, e1):
    with pytest.raises(InputError):
        rearrange_field(tent_field, e1, profile_values="median")


# --- profile derivative ------------------------------------------------------

def test_tent_psi(tent_field, e1):
    _, prof = rearrange_field(tent_field, e1)
    d = profile_derivative(prof)
    inner = (d.radii[:-1] > 0.05) & (d.radii[1:] < 0.95)
    assert np.allclose(d.slope[inner], -1.0, atol=0.02)
    assert np.allclose(d.psi(np.array([0.2, 0.5, 0.8])), 1.0, atol=0.02)


def test_square_profile_psi():
    r = np.linspace(0, 1, 2001)
    d = profile_derivative(RearrangementProfile(r, (1 - r) ** 2))
    v = np.array([0.04, 0.25, 0.64])
    assert np.allclose(d.psi(v), 2 * np.sqrt(v), atol=2e-3)


def test_flat_profile_has_zero_slope():
    r = np.linspace(0, 2, 201)
    prof = np.where(r < 1, 1.0, np.maximum(0.0, 2 - r))
    d = profile_derivative(RearrangementProfile(r, prof))
    assert np.all(d.slope[r[1:] <= 1.0] == 0.0)
    assert d.psi_at_radius(0.5) == 0.0
    assert d.psi_at_radius(1.5) == pytest.approx(1.0)


# --- continuity under refinement ----------------------------------------------

@pytest.mark.parametrize("name", ["tent", "gaussian"])
def test_profile_jump_shrinks(R1, e1, name):
    jumps = []
    for nodes, K in ((129, 256), (257, 512), (513, 1024)):
        u = build_field(name, R1, nodes)
        dist = distribution_function(u, K)
        V = volume_function(e1)
        r = np.linspace(0, float(volume_inverse(V, dist.measures[0])), 4000)
        jumps.append(float(np.max(np.abs(np.diff(nu_tilde(dist, V, r))))))
    assert jumps[1] <= 0.5 * jumps[0] * 1.05
    assert jumps[2] <= 0.5 * jumps[1] * 1.05


# --- properties --------------------------------------------------------------

bumps = st.lists(st.tuples(st.floats(-1.5, 1.5), st.floats(0.1, 0.8), st.floats(0.1, 3.0)),
                 min_size=1, max_size=4)


@settings(max_examples=25, deadline=None)
@given(bumps)
def test_random_fields_equimeasurable(spec):
    g = get_group("euclidean1")
    gauge = get_gauge("euclidean", g)

    def fn(p):
        x = p[..., 0]
        return sum(hgt * np.maximum(0.0, 1 - np.abs(x - c) / w) for c, w, hgt in spec)

    u = grid_field(g, [(-2.5, 2.5)], (501,), fn)
    ustar, prof = rearrange_field(u, gauge)
    assert integrate(ustar) == pytest.approx(integrate(u), rel=0.01)
    assert ustar.values.max() <= u.values.max() + 1e-12
    assert np.all(np.diff(prof.profile) <= 1e-12)
    # ustar is even and nonincreasing in |x|
    x = ustar.axes[0]
    right = ustar.values[x >= 0]
    assert np.all(np.diff(right) <= 0)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.2, 5.0))
def test_scaling_commutes(lam):
    g = get_group("euclidean2")
    gauge = get_gauge("euclidean", g)
    u = build_field("ellipsoid", g, 64)
    a, _ = rearrange_field(u, gauge)
    b, _ = rearrange_field(u.with_values(lam * u.values), gauge)
    assert np.allclose(b.values, lam * a.values, rtol=1e-9, atol=1e-12)
