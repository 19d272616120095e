import math

import numpy as np
import pytest

from sphereprofile.constants import (AscentConfig, Estimate, ascend_R, comparison_report,
                                     concentration_curve, estimate_R_P, gaussian_samples,
                                     initial_densities, verdict)
from sphereprofile.errors import DomainError, ValidationError
from sphereprofile.extension import (ConventionTag, gaussian_lp_integral, paraboloid_constant_bare,
                                     schrodinger_evolve)
from sphereprofile.geometry import unit
from sphereprofile.quadrature import SpaceTimeGrid, SurfaceDensity, build_disk_grid, l2_sigma_norm

# Frozen from (8 pi^4 sqrt(pi/3))^{1/6} / pi^{1/4} / (2 pi) and
# (8 pi^6)^{1/4} / pi^{1/2} / (2 pi)^{3/2}, evaluated in mpmath at 30 digits;
# a direct mpmath double quadrature of |u|^6 reproduces 8 pi^4 sqrt(pi/3).
R_P_FOURIER = {1: 0.3640407171641055, 2: 0.3354691334827069}


# ---------------------------------------------------------------- R_P

@pytest.mark.parametrize("d", [1, 2])
def test_R_P_closed_form(d):
    assert estimate_R_P(d).value == pytest.approx(R_P_FOURIER[d], rel=1e-13)


def test_R_P_box_cross_check_d1():
    est = estimate_R_P(1)
    assert est.box == {"T": 40.0, "X": 40.0, "h": 0.2, "hy": 0.01, "y_extent": 9.0}
    assert est.box_relative_error < 1e-6


def test_R_P_bare_convention():
    est = estimate_R_P(1, ConventionTag.bare(1))
    assert est.value == pytest.approx(paraboloid_constant_bare(1), rel=1e-15)
    assert est.value == pytest.approx(R_P_FOURIER[1] * 2 * math.pi, rel=1e-13)


def test_R_P_dimension_guard():
    with pytest.raises(DomainError):
        estimate_R_P(3)


def test_gaussian_sixth_power_integral_d1():
    assert gaussian_lp_integral(1, 6) == pytest.approx(8 * math.pi ** 4 * math.sqrt(math.pi / 3), rel=1e-12)


def test_rescaled_gaussian_lattice_quotient_invariant():
    # u_lam(t, x) = lam^{-1/2} u(t/lam^2, x/lam) for phi_lam(y) = lam^{1/2} phi(lam y):
    # scaling the y nodes by 1/lam, x by lam and t by lam^2 keeps the sums equal.
    def lattice_quotient(lam):
        phi = gaussian_samples(1, 0.02 / lam, 9.0 / lam, scale=lam)
        grid = SpaceTimeGrid.from_spacing(1, 10.0 * lam ** 2, 10.0 * lam, 0.25 * lam ** 2, 0.25 * lam)
        u = schrodinger_evolve(phi, grid)
        return (np.sum(np.abs(u.values) ** 6) * grid.cell_weight) ** (1 / 6) / phi.l2()

    assert lattice_quotient(1.5) == pytest.approx(lattice_quotient(1.0), rel=1e-8)


# ---------------------------------------------------------------- ascent

def test_ascent_from_constant_d2_monotone_and_stable():
    cfg = AscentConfig(steps=50, T=40.0)
    finals = []
    for n in (24, 32):
        f0 = initial_densities(2, n)["constant"]
        st = ascend_R(2, f0, cfg=cfg)
        q = [h[1] for h in st.step_history]
        assert all(b >= a for a, b in zip(q, q[1:]))
        assert l2_sigma_norm(st.density) == pytest.approx(1.0, abs=1e-12)
        finals.append(st.quotient)
    assert abs(finals[0] - finals[1]) < 1e-4


def test_ascent_restart_fixed_point_d1():
    f0 = initial_densities(1)["constant"]
    st = ascend_R(1, f0, steps=60)
    again = ascend_R(1, st.density, steps=10, grid=st.lattice)
    assert abs(again.quotient - st.quotient) < 1e-6


def test_ascent_needs_unit_norm():
    g = build_disk_grid(1, 64)
    with pytest.raises(ValidationError):
        ascend_R(1, SurfaceDensity(g, 3 * np.ones(g.size)))


# ---------------------------------------------------------------- concentration curve

@pytest.fixture(scope="module")
def curve_d1():
    return concentration_curve(1)


def test_curve_approaches_R_P_d1(curve_d1):
    gaps = [abs(q - R_P_FOURIER[1]) for _, q, _ in curve_d1]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_curve_rotation_invariant_d1(curve_d1):
    other = concentration_curve(1, center=unit([0.3, 1.0]))
    for (r, q, u), (_, q2, u2) in zip(curve_d1, other):
        assert abs(q - q2) <= u + u2 + 1e-9


def test_curve_resolution_stable_d1():
    (_, a, _), = concentration_curve(1, radii=(0.2,), n=48)
    (_, b, _), = concentration_curve(1, radii=(0.2,), n=96)
    assert abs(a - b) < 1e-3


def test_curve_radius_guard():
    with pytest.raises(DomainError):
        concentration_curve(1, radii=(0.7,))


# ---------------------------------------------------------------- verdict

def test_verdict_rule():
    assert verdict(Estimate(1.0, 0.1), Estimate(0.8, 0.05)) == "R_greater"
    assert verdict(Estimate(0.8, 0.05), Estimate(1.0, 0.1)) == "R_P_greater"
    assert verdict(Estimate(1.0, 0.1), Estimate(0.95, 0.1)) == "inconclusive"
    # Touching intervals are not separated.
    assert verdict(Estimate(1.0, 0.1), Estimate(0.8, 0.1)) == "inconclusive"


def test_verdict_monotone_in_uncertainty():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b = rng.uniform(0, 1, 2)
        ua, ub = rng.uniform(0, 0.2, 2)
        if verdict(Estimate(a, ua), Estimate(b, ub)) == "R_greater":
            s = rng.uniform(0, 1)
            assert verdict(Estimate(a, s * ua), Estimate(b, s * ub)) == "R_greater"


# ---------------------------------------------------------------- comparison report

@pytest.fixture(scope="module")
def report_d2():
    return comparison_report(2, steps=20)


def test_d2_R_est_dominates_curve(report_d2):
    for _, q, _ in report_d2.concentration_curve:
        assert report_d2.R_est.value >= q


def test_report_verdict_obeys_rule(report_d2):
    assert report_d2.verdict == verdict(report_d2.R_est, report_d2.R_P_est)
    js = report_d2.to_json()
    assert js["convention"]["name"] == "fourier"
    assert js["R_P_est"]["value"] == pytest.approx(R_P_FOURIER[2], rel=1e-13)
