import math

import numpy as np
import pytest

from sphereprofile.constants import gaussian_samples
from sphereprofile.errors import DomainError
from sphereprofile.extension import (ConventionTag, ModulationParams, even_norm_via_convolution,
                                     evolve_at, extend_at, extend_sphere,
                                     gaussian_evolution_analytic, gaussian_l2_squared,
                                     gaussian_lp_box_integral, gaussian_lp_integral,
                                     paraboloid_constant_bare, pointwise_bound,
                                     rescale_factorize, rescaling_residual, schrodinger_evolve,
                                     sphere_quotient, strichartz_exponent, strichartz_quotient,
                                     unfactorize)
from sphereprofile.geometry import CapSpec, north_pole, unit
from sphereprofile.quadrature import (FlatSamples, SpaceTimeGrid, SurfaceDensity,
                                      build_ball_grid, build_cap_grid, build_disk_grid,
                                      build_sphere_grid, l2_sigma_norm, lp_norm, random_density)


def cap_bump_density(cap, n=24, seed=0):
    rng = np.random.default_rng(seed)
    g = build_cap_grid(cap, n)
    y = g.nodes
    s = np.sum(y * y, 1)
    cut = np.where(s < 1, np.exp(1 - 1 / (1 - np.minimum(s, 1 - 1e-12))), 0.0)
    c = rng.uniform(-0.4, 0.4, (2, cap.d))
    a = rng.normal(size=2) + 1j * rng.normal(size=2)
    v = sum(ai * np.exp(-np.sum((y - ci) ** 2, 1) / 0.045) for ai, ci in zip(a, c)) * cut
    return SurfaceDensity(g, v).normalized()


# ---------------------------------------------------------------- conventions

def test_convention_presets():
    f = ConventionTag.fourier(2)
    assert f.prefactor == pytest.approx((2 * math.pi) ** -1.5) and f.sign == -1
    b = ConventionTag.bare(1)
    assert b.prefactor == 1.0 and b.sign == 1
    with pytest.raises(DomainError):
        ConventionTag.named("unitary", 2)


def test_strichartz_exponent():
    assert strichartz_exponent(1) == 6.0
    assert strichartz_exponent(2) == 4.0


def test_modulation_params_guard():
    with pytest.raises(DomainError):
        ModulationParams((math.inf,), 0.0)


# ---------------------------------------------------------------- extension operator

def test_extension_of_zero():
    g = build_disk_grid(2, 16)
    F = extend_sphere(SurfaceDensity(g, np.zeros(g.size)), SpaceTimeGrid(2, 2.0, 2.0, 4, 4))
    assert np.all(F.values == 0)


def test_extension_at_origin_is_mean():
    g = build_disk_grid(2, 24)
    f = random_density(g, np.random.default_rng(4))
    tag = ConventionTag.fourier(2)
    val = extend_at(f, np.zeros((1, 3)), tag)[0]
    assert val == pytest.approx(tag.prefactor * np.sum(g.sigma_weights * f.values), rel=1e-14)


def test_extension_lattice_matches_pointwise():
    g = build_disk_grid(1, 64)
    f = random_density(g, np.random.default_rng(5))
    grid = SpaceTimeGrid(1, 5.0, 4.0, 6, 7)
    F = extend_sphere(f, grid)
    X = np.column_stack([np.tile(grid.xs[:, 0], grid.nt), np.repeat(grid.ts, grid.nx)])
    assert np.allclose(F.values.ravel(), extend_at(f, X), atol=1e-13)


def test_full_sphere_measure_transform():
    g = build_sphere_grid(2, 48)
    f = SurfaceDensity(g, np.ones(g.size))
    r = np.linspace(0.5, 10.0, 20)
    X = np.column_stack([r * math.cos(0.3), r * math.sin(0.3), 0 * r])
    F = extend_at(f, X, ConventionTag.bare(2))
    assert np.max(np.abs(F - 4 * math.pi * np.sin(r) / r)) < 1e-6


def test_pointwise_bound_dominates():
    g = build_disk_grid(2, 24)
    f = random_density(g, np.random.default_rng(6))
    F = extend_sphere(f, SpaceTimeGrid(2, 10.0, 10.0, 9, 9))
    assert np.max(np.abs(F.values)) <= pointwise_bound(f) * (1 + 1e-12)


# ---------------------------------------------------------------- Schrodinger propagator

def test_evolution_of_zero():
    grid = build_ball_grid(1, 32, 2.0)
    u = schrodinger_evolve(FlatSamples(grid, np.zeros(grid.size)), SpaceTimeGrid(1, 2.0, 2.0, 4, 4))
    assert np.all(u.values == 0)


@pytest.mark.parametrize("d", [1, 2])
def test_gaussian_evolution_matches_analytic(d):
    phi = gaussian_samples(d, 0.05 if d == 2 else 0.01, 9.0)
    # d=2 has 41^2 spatial points per time step; keep a handful of times.
    grid = SpaceTimeGrid(d, 4.0, 4.0, 41 if d == 1 else 5, 41)
    u = schrodinger_evolve(phi, grid)
    xs = grid.xs
    T = np.repeat(grid.ts[:, None], len(xs), axis=1)
    if d == 1:
        exact = gaussian_evolution_analytic(1, T, np.tile(xs[:, 0], (grid.nt, 1)))
    else:
        r2 = np.sum(xs ** 2, 1)
        exact = (2 * math.pi / (1 + 1j * T)) * np.exp(-r2[None, :] / (2 * (1 + 1j * T)))
    assert np.max(np.abs(np.abs(u.values) - np.abs(exact))) < 1e-8


def test_time_reversal_symmetry():
    grid = build_ball_grid(1, 48, 1.0)
    rng = np.random.default_rng(9)
    phi = FlatSamples(grid, rng.normal(size=grid.size) + 1j * rng.normal(size=grid.size))
    X = rng.uniform(-5, 5, (10, 2))
    a = evolve_at(FlatSamples(grid, np.conj(phi.values)), -X)
    b = np.conj(evolve_at(phi, X))
    assert np.allclose(a, b, atol=1e-12)


def test_gaussian_analytic_origin():
    for d in (1, 2):
        x = np.zeros(d)
        assert gaussian_evolution_analytic(d, 0.0, x) == pytest.approx((2 * math.pi) ** (d / 2))


def test_gaussian_analytic_profile_ratio():
    t, x = 3.0, 1.7
    ratio = abs(gaussian_evolution_analytic(1, t, x)) / abs(gaussian_evolution_analytic(1, t, 0.0))
    assert ratio == pytest.approx(math.exp(-x * x / (2 * (1 + t * t))), rel=1e-14)
    phi = gaussian_samples(1, 0.01, 9.0)
    q = evolve_at(phi, [[x, t], [0.0, t]])
    assert abs(q[0]) / abs(q[1]) == pytest.approx(ratio, rel=1e-10)


@pytest.mark.parametrize("d,h,ext", [(1, 0.01, 9.0), (2, 0.02, 6.0)])
def test_gaussian_time_decay_rate(d, h, ext):
    phi = gaussian_samples(d, h, ext)
    ts = np.array([10.0, 20.0, 40.0])
    X = np.column_stack([np.zeros((3, d)), ts])
    vals = np.abs(evolve_at(phi, X))
    slope = np.polyfit(np.log(1 + ts ** 2), np.log(vals), 1)[0]
    assert slope == pytest.approx(-d / 4, abs=1e-8)
    assert np.allclose(vals, (2 * math.pi) ** (d / 2) * (1 + ts ** 2) ** (-d / 4), rtol=1e-8)


def test_gaussian_lp_integrals_closed_forms():
    # d=1: (2 pi)^3 sqrt(pi/3) pi ; d=2: (2 pi)^4 (pi/2) pi
    assert gaussian_lp_integral(1, 6) == pytest.approx(8 * math.pi ** 4 * math.sqrt(math.pi / 3), rel=1e-12)
    assert gaussian_lp_integral(2, 4) == pytest.approx(8 * math.pi ** 6, rel=1e-12)
    assert gaussian_l2_squared(2) == pytest.approx(math.pi)
    assert gaussian_lp_box_integral(1, 6, 1e4, 1e4) == pytest.approx(gaussian_lp_integral(1, 6), rel=1e-3)


def test_strichartz_quotient_gaussian_closed_form():
    q = strichartz_quotient(gaussian_samples(1), 1, conv=ConventionTag.bare(1))
    assert abs(q.value - paraboloid_constant_bare(1)) < 1e-6


def test_strichartz_quotient_scale_invariance():
    phi = gaussian_samples(1)
    a = strichartz_quotient(phi, 1)
    b = strichartz_quotient(phi.scaled(3.5 - 2j), 1)
    assert b.value == pytest.approx(a.value, rel=1e-12)


def test_strichartz_quotient_rescaled_gaussian():
    a = strichartz_quotient(gaussian_samples(1), 1)
    b = strichartz_quotient(gaussian_samples(1, scale=1.5), 1)
    assert abs(a.value - b.value) <= a.uncertainty + b.uncertainty + 1e-9


def test_strichartz_quotient_zero_profile():
    grid = build_ball_grid(1, 16)
    with pytest.raises(DomainError):
        strichartz_quotient(FlatSamples(grid, np.zeros(grid.size)), 1)


# ---------------------------------------------------------------- rescaling

def test_factorize_zero():
    cap = CapSpec(north_pole(2), 0.25)
    g = build_cap_grid(cap, 16)
    gg, _ = rescale_factorize(SurfaceDensity(g, np.zeros(g.size)), cap)
    assert np.all(gg.values == 0)


def test_factorize_radius_guard():
    cap = CapSpec(north_pole(1), 0.6)
    g = build_cap_grid(cap, 16)
    with pytest.raises(DomainError):
        rescale_factorize(SurfaceDensity(g, np.ones(g.size)), cap)


def test_rescaling_identity_21_cubed():
    cap = CapSpec(north_pole(2), 0.25)
    f = cap_bump_density(cap)
    assert rescaling_residual(f, cap, SpaceTimeGrid(2, 10.0, 10.0, 21, 21)) < 1e-8


def test_factorize_norm_ratio_and_round_trip():
    cap = CapSpec(unit([0.2, -0.4, 1.0]), 0.4)
    f = cap_bump_density(cap, seed=3)
    g, _ = rescale_factorize(f, cap)
    ratio = g.l2() / l2_sigma_norm(f)
    assert 1 - 1e-12 <= ratio <= (1 - cap.radius ** 2) ** -0.25
    back = unfactorize(g, cap, f.grid)
    assert np.allclose(back.values, f.values, atol=1e-14)


# ---------------------------------------------------------------- norms through convolution

def test_convolution_norm_of_zero():
    g = build_disk_grid(2, 16)
    assert even_norm_via_convolution(SurfaceDensity(g, np.zeros(g.size))).value == 0.0


def test_convolution_norm_homogeneity():
    g = build_disk_grid(1, 64)
    f = random_density(g, np.random.default_rng(2))
    a = even_norm_via_convolution(f).value
    b = even_norm_via_convolution(f.scaled(2.0)).value
    assert b == pytest.approx(2 * a, rel=1e-12)


def test_convolution_agrees_with_space_time_d2():
    g = build_disk_grid(2, 32)
    f = random_density(g, np.random.default_rng(12))
    c = sphere_quotient(f, method="convolution")
    s = sphere_quotient(f, method="space-time")
    assert abs(c.value - s.value) <= c.uncertainty + s.uncertainty
    assert abs(c.value - s.value) / c.value < 1e-2


def test_sphere_quotient_scale_invariance():
    g = build_disk_grid(2, 24)
    f = random_density(g, np.random.default_rng(13))
    a = sphere_quotient(f).value
    assert sphere_quotient(f.scaled(-0.3j)).value == pytest.approx(a, rel=1e-12)


def test_sphere_quotient_modulation_invariance():
    g = build_disk_grid(1, 128)
    f = random_density(g, np.random.default_rng(14))
    xi = np.array([1.5, -0.8])
    fm = f.with_values(f.values * np.exp(1j * g.points @ xi))
    a, b = sphere_quotient(f), sphere_quotient(fm)
    assert abs(a.value - b.value) <= max(a.uncertainty + b.uncertainty, 1e-4 * a.value)


def test_constant_density_quotient_self_convergence():
    vals = []
    for n in (24, 48):
        g = build_disk_grid(2, n)
        vals.append(sphere_quotient(SurfaceDensity(g, np.ones(g.size))).value)
    assert vals[0] > 0
    assert abs(vals[0] - vals[1]) / vals[1] < 5e-4


def test_fourier_and_bare_differ_by_prefactor():
    g = build_disk_grid(1, 64)
    f = random_density(g, np.random.default_rng(15))
    a = sphere_quotient(f, ConventionTag.fourier(1)).value
    b = sphere_quotient(f, ConventionTag.bare(1)).value
    assert a == pytest.approx(b * (2 * math.pi) ** -1.0, rel=1e-12)


def test_sphere_quotient_zero_density():
    g = build_disk_grid(1, 16)
    with pytest.raises(DomainError):
        sphere_quotient(SurfaceDensity(g, np.zeros(g.size)))


def test_space_time_norm_is_bounded_by_truncated_plus_tail():
    g = build_disk_grid(1, 64)
    f = random_density(g, np.random.default_rng(16))
    grid = SpaceTimeGrid.from_spacing(1, 100.0, 100.0, 1.0, 0.5)
    est = lp_norm(extend_sphere(f, grid), 6)
    assert est.truncated <= est.value
