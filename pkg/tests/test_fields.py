import numpy as np
import pytest
from conftest import tent

from carnot_rearrange.errors import InputError
from carnot_rearrange.fields import (
    GridField,
    build_field,
    builder_support,
    distribution_function,
    grid_field,
    integrate,
    make_axes,
    superlevel_measure,
)
from carnot_rearrange.rearrange import volume_function


def tent_fn(p):
    return np.maximum(0.0, 1 - np.abs(p[..., 0]))


def test_zero_field_integrates_to_zero(R2):
    u = build_field("zero", R2, 17)
    assert integrate(u) == 0.0
    assert integrate(u, np.square) == 0.0


def test_tent_integral(R1):
    for nodes in (129, 257):
        u = tent(R1, nodes)
        h = u.spacing[0]
        assert integrate(u) == pytest.approx(1.0, abs=h * h + 1e-12)


def test_plane_plateau_square(R2):
    h = 1 / 100
    u = grid_field(R2, [(-0.5 + h / 2, 1.5 - h / 2)] * 2, (200, 200),
                   lambda p: 2.0 * np.all((p >= 0) & (p <= 1), axis=-1))
    assert integrate(u, np.square) == pytest.approx(4.0, abs=8 * 4 * h)


def test_transform_must_vanish_at_zero(tent_field):
    with pytest.raises(InputError):
        integrate(tent_field, lambda s: s + 1)


def test_superlevel_measure(R1, tent_field):
    h = tent_field.spacing[0]
    assert superlevel_measure(tent_field, 0.5) == pytest.approx(1.0, abs=2 * h)
    assert superlevel_measure(tent_field, 1.0) == 0.0
    assert superlevel_measure(tent_field, 3.0) == 0.0
    weighted = grid_field(R1, [(-1.5, 1.5)], (257,), tent_fn, density=lambda p: 2.0 + 0 * p[..., 0])
    assert superlevel_measure(weighted, 0.5) == pytest.approx(2.0, abs=4 * h)


def test_superlevel_measure_brute_force(H1, koranyi):
    u = build_field("two_bump", H1, 24, gauge=koranyi)
    for t in (0.0, 0.2, 0.55):
        count = sum(1 for v in u.values.ravel() if v > t)
        assert superlevel_measure(u, t) == pytest.approx(count * u.cell_volume, rel=1e-12)


def test_distribution_of_zero(R2):
    d = distribution_function(build_field("zero", R2, 9), levels=16)
    assert np.all(d.measures == 0)
    assert d.ess_sup == 0.0


def test_tent_distribution(tent_field):
    K = 101
    d = distribution_function(tent_field, K)
    h = tent_field.spacing[0]
    t = np.linspace(0, 0.999, 400)
    assert np.max(np.abs(d(t) - 2 * (1 - t))) <= 2 * h + 2 / K
    assert np.all(np.diff(d.measures) <= 0)
    assert d.measures[-1] == 0.0


def test_heisenberg_cone_distribution(cone_field, koranyi):
    c = volume_function(koranyi).c1
    d = distribution_function(cone_field, 512)
    t = np.array([0.1, 0.3, 0.5, 0.7])
    exact = c * (1 - t) ** 4
    assert np.allclose(d(t), exact, rtol=0.05)


def test_quadrature_order(R1):
    # phi(s) = s^2 on the tent, grids with the kinks between nodes
    errs = []
    for k in (50, 100, 200, 400):
        h = 3.0 / k
        u = grid_field(R1, [(-1.5 + h / 3, 1.5 + h / 3)], (k + 1,), tent_fn)
        errs.append(abs(integrate(u, np.square) - 2 / 3))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios >= 1.8), ratios


def test_gridfield_validation(R1):
    ax = make_axes([(0, 1)], (5,))
    with pytest.raises(InputError):
        GridField(R1, ax, -np.ones(5))
    with pytest.raises(InputError):
        GridField(R1, ax, np.ones(4))
    with pytest.raises(InputError):
        GridField(R1, (np.array([0, 0.1, 0.5, 0.6, 1.0]),), np.ones(5))


@pytest.mark.parametrize("name,group", [("tent", "euclidean1"), ("plateaus", "euclidean1"),
                                        ("pyramid", "euclidean2"), ("ellipsoid", "euclidean2"),
                                        ("gaussian", "heisenberg1"), ("cone", "heisenberg1"),
                                        ("two_bump", "heisenberg1")])
def test_builders_compact_support(name, group):
    from carnot_rearrange.gauges import get_gauge
    from carnot_rearrange.groups import get_group
    g = get_group(group)
    gauge = get_gauge("koranyi" if g.name == "heisenberg1" else "euclidean", g)
    u = build_field(name, g, 32 if g.n == 3 else 101, gauge=gauge)
    assert u.values.max() > 0
    assert u.boundary_max() == 0.0
    _, support = builder_support(name, g, gauge)
    assert len(support) == g.n


def test_unknown_builder(R1):
    with pytest.raises(InputError, match="unknown field builder"):
        build_field("sombrero", R1, 16)
