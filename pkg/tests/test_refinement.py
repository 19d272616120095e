import math

import numpy as np
import pytest

from sphereprofile.errors import DomainError, FitError
from sphereprofile.geometry import CapSpec, build_cap_net, cap_contains, cap_sigma_measure
from sphereprofile.quadrature import SurfaceDensity, build_cap_grid, build_disk_grid, random_density
from sphereprofile.refinement import (bilinear_decay, bilinear_interaction, cap_bump,
                                      cap_concentration, decay_fit, fit_envelope, nets_for,
                                      refined_inequality_report, xpq_norm)


# ---------------------------------------------------------------- X_{p,q}

def test_xpq_zero():
    g = build_disk_grid(2, 16)
    assert xpq_norm(SurfaceDensity(g, np.zeros(g.size)), 1.5) == 0.0


def test_xpq_homogeneity():
    f = cap_bump([0.1, 0.0], 0.2, 24)
    assert xpq_norm(f.scaled(2.0), 1.5) == pytest.approx(2 * xpq_norm(f, 1.5), rel=1e-12)


def test_xpq_exponent_guard():
    f = cap_bump([0.0], 0.2, 24)
    with pytest.raises(DomainError):
        xpq_norm(f, 2.0)


@pytest.mark.parametrize("k0", [3, 4])
def test_xpq_peak_at_matching_level(k0):
    # Net caps at level k have radius 2^{-k+1}; a bump of that radius peaks there.
    f = cap_bump([0.1, 0.05], 2.0 ** (-k0 + 1), 32)
    _, per_level = xpq_norm(f, 1.5, max_level=5, table=True)
    assert int(np.argmax(per_level)) == k0


def test_xpq_level_term_brute_force():
    f = cap_bump([0.1, 0.05], 0.125, 32)
    p, q, k = 1.5, 4.0, 4
    _, per_level = xpq_norm(f, p, q, max_level=k, table=True)
    net = nets_for(f, k)[k]
    rad = 2.0 * net.separation
    area = cap_sigma_measure(2, rad)
    w = f.grid.sigma_weights * np.abs(f.values) ** p
    total = 0.0
    for z in net.centers:
        inside = cap_contains(CapSpec(z, rad), f.grid.points)
        total += area ** (q / 2) * (np.sum(w[inside]) / area) ** (q / p)
    assert per_level[k] == pytest.approx(total, rel=1e-12)


# ---------------------------------------------------------------- concentration

def test_concentration_zero():
    g = build_disk_grid(2, 16)
    rep = cap_concentration(SurfaceDensity(g, np.zeros(g.size)))
    assert rep.value == 0.0 and rep.best_cap is None


def test_concentration_of_net_cap_indicator():
    net = build_cap_net(2, 3)
    z = net.centers[np.argmax(net.centers[:, -1])]
    cap = CapSpec(z, 2 * net.separation)
    g = build_cap_grid(CapSpec(z, 0.4), 48)
    inside = cap_contains(cap, g.points).astype(float)
    f = SurfaceDensity(g, inside / math.sqrt(np.sum(g.sigma_weights * inside)))
    val = cap_concentration(f).value
    # Cauchy-Schwarz caps the value at 1; the discrete cap mass differs from
    # |C| by a few parts per thousand at the indicator's edge.
    assert abs(val - 1.0) < 0.05


def test_concentration_curve_is_finite():
    vals = []
    for r in (0.4, 0.2, 0.1):
        f = cap_bump([0.0, 0.0], r, 24)
        vals.append(cap_concentration(f).value)
    assert all(math.isfinite(v) and v > 0 for v in vals)


# ---------------------------------------------------------------- refined inequality

def test_single_bump_record_positive():
    rec = refined_inequality_report(cap_bump([0.1], 0.1, 48))
    assert rec.extension_norm > 0 and rec.concentration > 0 and rec.l2 == pytest.approx(1.0)


def test_envelope_bounds_corpus():
    g = build_disk_grid(1, 128)
    rng = np.random.default_rng(0)
    recs = [refined_inequality_report(random_density(g, rng)) for _ in range(50)]
    env = fit_envelope(recs)
    for r in recs:
        assert r.extension_norm <= env.bound(r) * (1 + 1e-12)
    assert 0 < env.alpha < 1


def test_spreading_family_under_envelope():
    g = build_disk_grid(1, 128)
    rng = np.random.default_rng(1)
    corpus = [refined_inequality_report(random_density(g, rng)) for _ in range(20)]
    family = [refined_inequality_report(cap_bump([0.0], r, 96)) for r in (0.05, 0.1, 0.2, 0.4)]
    env = fit_envelope(corpus + family)
    for rec in family:
        assert rec.extension_norm <= env.bound(rec) * (1 + 1e-12)


def test_envelope_empty_corpus():
    with pytest.raises(FitError):
        fit_envelope([])


# ---------------------------------------------------------------- bilinear interaction

def test_bilinear_zero_partner():
    f1 = cap_bump([0.2], 0.05, 32)
    f2 = cap_bump([-0.2], 0.05, 32)
    assert bilinear_interaction(f1, f2.scaled(0.0)).value == 0.0


def test_bilinear_symmetric():
    f1 = cap_bump([0.15], 0.05, 32)
    f2 = cap_bump([-0.15], 0.05, 32)
    a = bilinear_interaction(f1, f2).value
    b = bilinear_interaction(f2, f1).value
    assert a == pytest.approx(b, rel=1e-12)


def test_bilinear_needs_disjoint_caps():
    f1 = cap_bump([0.0], 0.1, 32)
    f2 = cap_bump([0.05], 0.1, 32)
    with pytest.raises(DomainError):
        bilinear_interaction(f1, f2)


def test_bilinear_decay_measured_d2():
    fit = bilinear_decay(2)
    assert all(a > b for a, b in zip(fit.norms, fit.norms[1:]))
    assert fit.alpha_hat > 0 and fit.r2 > 0.9


def test_decay_fit_exact_power_law():
    fit = decay_fit([(N, N ** -0.7) for N in (4, 8, 16, 32)])
    assert fit.alpha_hat == pytest.approx(0.7, abs=1e-10)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_decay_fit_constant():
    fit = decay_fit([(N, 3.0) for N in (4, 8, 16, 32)])
    assert fit.alpha_hat == 0.0


def test_decay_fit_guards():
    with pytest.raises(FitError):
        decay_fit([(4, 1.0), (8, 0.5)])
    with pytest.raises(FitError):
        decay_fit([(4, 1.0), (8, 0.0), (16, 0.1)])
