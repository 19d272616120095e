import math

import numpy as np
import pytest

from sphereprofile.errors import DomainError, ResolutionError
from sphereprofile.extension import gaussian_evolution_analytic
from sphereprofile.geometry import CapSpec, north_pole, unit
from sphereprofile.quadrature import (SpaceTimeField, SpaceTimeGrid, SurfaceDensity,
                                      build_ball_grid, build_cap_grid, build_disk_grid,
                                      build_sphere_grid, l1_sigma_norm, l2_sigma_norm, lp_norm,
                                      quadrature_reach, random_density, union_grid)


# ---------------------------------------------------------------- grids

def test_sigma_mass_d1():
    g = build_disk_grid(1, 1024)
    assert abs(np.sum(g.sigma_weights) - math.pi / 3) < 1e-8


def test_chart_area_d2():
    g = build_disk_grid(2, 64)
    assert abs(np.sum(g.weights) - math.pi / 4) < 1e-6


def test_sigma_mass_self_convergence_d1():
    a = np.sum(build_disk_grid(1, 512).sigma_weights)
    b = np.sum(build_disk_grid(1, 1024).sigma_weights)
    assert abs(a - b) < 1e-8


def test_sigma_mass_d2_cap():
    # Gamma is the cap of projection radius 1/2: 2 pi (1 - sqrt(3)/2).
    g = build_disk_grid(2, 48)
    assert np.sum(g.sigma_weights) == pytest.approx(2 * math.pi * (1 - math.sqrt(3) / 2), rel=1e-8)


@pytest.mark.parametrize("d,layout", [(1, "gauss"), (1, "uniform"), (2, "polar"), (2, "cartesian")])
def test_ball_grid_volume(d, layout):
    g = build_ball_grid(d, 64, 1.0, layout)
    vol = 2.0 if d == 1 else math.pi
    tol = 1e-12 if layout in ("gauss", "polar") else 2e-2
    assert abs(np.sum(g.weights) - vol) < tol * vol


def test_ball_grid_too_coarse():
    with pytest.raises(ResolutionError):
        build_ball_grid(2, 4)


def test_grid_points_on_sphere():
    cap = CapSpec(unit([1.0, 2.0, 2.0]), 0.3)
    g = build_cap_grid(cap, 16)
    assert np.allclose(np.linalg.norm(g.points, axis=1), 1.0, atol=1e-14)
    assert np.sum(g.sigma_weights) == pytest.approx(cap.measure, rel=1e-6)


def test_full_sphere_area():
    g = build_sphere_grid(2, 32)
    assert np.sum(g.sigma_weights) == pytest.approx(4 * math.pi, rel=1e-8)


def test_union_grid_concatenates():
    a = build_cap_grid(CapSpec(unit([0.5, 0, 1]), 0.1), 12)
    b = build_cap_grid(CapSpec(unit([-0.5, 0, 1]), 0.1), 12)
    u = union_grid([a, b])
    assert u.size == a.size + b.size
    assert np.sum(u.sigma_weights) == pytest.approx(np.sum(a.sigma_weights) + np.sum(b.sigma_weights))


def test_quadrature_reach_grows_with_n():
    x1, t1 = quadrature_reach(build_disk_grid(2, 24))
    x2, t2 = quadrature_reach(build_disk_grid(2, 48))
    assert x2 > x1 and t2 > t1


# ---------------------------------------------------------------- surface norms

def test_l2_of_zero():
    g = build_disk_grid(1, 64)
    assert l2_sigma_norm(SurfaceDensity(g, np.zeros(g.size))) == 0.0


def test_l2_of_one_d1():
    g = build_disk_grid(1, 1024)
    assert l2_sigma_norm(SurfaceDensity(g, np.ones(g.size))) == pytest.approx(math.sqrt(math.pi / 3), abs=1e-8)


def test_l2_modulus_invariance():
    g = build_disk_grid(2, 24)
    f = random_density(g, np.random.default_rng(0))
    ph = np.exp(1j * 7.3 * g.points[:, 0])
    assert l2_sigma_norm(f.with_values(f.values * ph)) == pytest.approx(l2_sigma_norm(f), rel=1e-14)


def test_l1_bounded_by_l2():
    g = build_disk_grid(2, 24)
    f = random_density(g, np.random.default_rng(1))
    assert l1_sigma_norm(f) <= l2_sigma_norm(f) * math.sqrt(np.sum(g.sigma_weights)) * (1 + 1e-12)


def test_density_shape_guard():
    g = build_disk_grid(1, 16)
    with pytest.raises(DomainError):
        SurfaceDensity(g, np.zeros(g.size + 1))
    with pytest.raises(DomainError):
        SurfaceDensity(g, np.zeros(g.size)).normalized()


# ---------------------------------------------------------------- space-time norms

def test_lp_norm_zero_field():
    grid = SpaceTimeGrid(1, 1.0, 1.0, 8, 8)
    assert lp_norm(SpaceTimeField(grid, np.zeros((8, 8))), 2, tail=False).value == 0.0


def test_lp_norm_constant_field():
    grid = SpaceTimeGrid(1, 1.0, 1.0, 20, 20)
    est = lp_norm(SpaceTimeField(grid, np.ones((20, 20))), 2, tail=False)
    assert est.value == pytest.approx(2.0, abs=1e-12)


def test_lp_norm_gaussian_evolution_d1():
    grid = SpaceTimeGrid.from_spacing(1, 40.0, 40.0, 0.1, 0.1)
    T, X = np.meshgrid(grid.ts, grid.x_axis, indexing="ij")
    u = gaussian_evolution_analytic(1, T, X)
    est = lp_norm(SpaceTimeField(grid, u), 6)
    # int |u|^6 = (2 pi)^3 sqrt(pi/3) int dt/(1+t^2) = 8 pi^4 sqrt(pi/3)
    exact = (8 * math.pi ** 4 * math.sqrt(math.pi / 3)) ** (1 / 6)
    assert abs(est.value - exact) / exact < 1e-4


def test_space_time_grid_guards():
    with pytest.raises(DomainError):
        SpaceTimeGrid(1, 0.0, 1.0, 4, 4)
    grid = SpaceTimeGrid(2, 1.0, 1.0, 4, 4)
    with pytest.raises(DomainError):
        SpaceTimeField(grid, np.zeros((4, 4)))


def test_space_time_grid_cells():
    grid = SpaceTimeGrid.from_spacing(2, 3.0, 2.0, 0.5, 0.25)
    assert grid.nt == 12 and grid.nx == 16
    assert grid.ts[0] == pytest.approx(-2.75)
    assert grid.xs.shape == (256, 2)
    assert grid.cell_weight == pytest.approx(0.5 * 0.25 ** 2)
