"""Estimates of the sphere constant R (by ascent), the paraboloid constant
R_P (through Gaussians), the concentration curve joining them and the
uncertainty-aware comparison of the two."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ValidationError
from .extension import (CHUNK, ConventionTag, _tag, default_lattice, extend_sphere, gaussian_l2_squared,
                        gaussian_lp_box_integral, gaussian_lp_integral,
                        paraboloid_constant_as_written, schrodinger_evolve, sphere_quotient,
                        strichartz_exponent)
from .geometry import CapSpec, north_pole
from .quadrature import (FlatSamples, SpaceTimeGrid, SurfaceDensity, build_ball_grid,
                         build_cap_grid, build_disk_grid, l2_sigma_norm, quadrature_reach,
                         spectral_widths, suggest_lattice)


@dataclass(frozen=True)
class Estimate:
    value: float
    uncertainty: float

    def to_json(self) -> dict:
        return {"value": self.value, "uncertainty": self.uncertainty}


# ----------------------------------------------------------------------------
# R_P through Gaussians
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class RPEstimate:
    """R_P = prefactor * ||e^{it Delta/2} phi_G||_p / ||phi_G||_2 in one
    convention, with the closed form, the quadrature cross-check on a box and
    the constant as written (a p-th power carrying (2 pi)^{-(d+2)/d})."""

    d: int
    value: float
    uncertainty: float
    convention: ConventionTag
    box_analytic: float
    box_quadrature: float
    box: dict
    as_written: float

    @property
    def estimate(self) -> Estimate:
        return Estimate(self.value, self.uncertainty)

    @property
    def box_relative_error(self) -> float:
        return abs(self.box_quadrature - self.box_analytic) / self.box_analytic

    def to_json(self) -> dict:
        return {"d": self.d, "value": self.value, "uncertainty": self.uncertainty,
                "convention": self.convention.to_json(), "box_analytic": self.box_analytic,
                "box_quadrature": self.box_quadrature, "box": self.box,
                "box_relative_error": self.box_relative_error, "as_written": self.as_written}


def gaussian_samples(d: int, h: float = 0.01, extent: float = 9.0, scale: float = 1.0) -> FlatSamples:
    """phi_G(y) = scale^{d/2} exp(-|scale y|^2 / 2) on a uniform grid of
    spacing h over |y_i| <= extent."""
    n = int(round(2 * extent / h))
    if d == 1:
        grid = build_ball_grid(1, n, extent, "uniform")
    elif d == 2:
        grid = build_ball_grid(2, n, extent, "cartesian")
    else:
        raise DomainError("Gaussian samples are implemented for d in {1, 2}")
    y = grid.nodes
    return FlatSamples(grid, scale ** (d / 2) * np.exp(-0.5 * scale ** 2 * np.sum(y * y, 1)))


RP_BOX_DEFAULTS = {1: dict(T=40.0, X=40.0, h=0.2, hy=0.01, y_extent=9.0),
                   2: dict(T=8.0, X=8.0, h=0.4, hy=0.15, y_extent=6.0)}


def estimate_R_P(d: int, conv: Optional[ConventionTag] = None, T: Optional[float] = None,
                 X: Optional[float] = None, h: Optional[float] = None,
                 hy: Optional[float] = None, y_extent: Optional[float] = None) -> RPEstimate:
    """Closed-form Gaussian quotient plus a box-vs-box check: the analytic
    integral of |u|^p over [-T, T] x [-X, X]^d against the lattice sum of the
    numerically evolved Gaussian on the same box."""
    if d not in (1, 2):
        raise DomainError("R_P is estimated for d in {1, 2}")
    dflt = RP_BOX_DEFAULTS[d]
    T = dflt["T"] if T is None else T
    X = dflt["X"] if X is None else X
    h = dflt["h"] if h is None else h
    hy = dflt["hy"] if hy is None else hy
    y_extent = dflt["y_extent"] if y_extent is None else y_extent
    tag = conv or ConventionTag.fourier(d)
    p = strichartz_exponent(d)
    full = gaussian_lp_integral(d, p) ** (1 / p) / math.sqrt(gaussian_l2_squared(d))
    box_a = gaussian_lp_box_integral(d, p, T, X)
    phi = gaussian_samples(d, hy, y_extent)
    grid = SpaceTimeGrid.from_spacing(d, T, X, h, h)
    u = schrodinger_evolve(phi, grid)
    box_q = float(np.sum(np.abs(u.values) ** p) * grid.cell_weight)
    rel = abs(box_q - box_a) / box_a
    return RPEstimate(d, tag.prefactor * full, tag.prefactor * full * rel / p, tag, box_a, box_q,
                      {"T": T, "X": X, "h": grid.ht, "hy": hy, "y_extent": y_extent},
                      paraboloid_constant_as_written(d))


# ----------------------------------------------------------------------------
# Ascent
# ----------------------------------------------------------------------------


@dataclass
class AscentConfig:
    steps: int = 50
    tol: float = 1e-7
    patience: int = 5
    min_step: float = 1.0 / 1024
    T: Optional[float] = None
    X: Optional[float] = None


@dataclass
class AscentState:
    density: SurfaceDensity
    quotient: float
    iteration: int
    step_history: list = field(default_factory=list)
    converged: bool = False
    stalled: bool = False
    lattice: Optional[SpaceTimeGrid] = None

    def to_json(self) -> dict:
        return {"quotient": self.quotient, "iteration": self.iteration,
                "converged": self.converged, "stalled": self.stalled,
                "step_history": [list(s) for s in self.step_history],
                "lattice": None if self.lattice is None else self.lattice.to_json()}


def ascent_lattice(f: SurfaceDensity, T: Optional[float] = None,
                   X: Optional[float] = None) -> SpaceTimeGrid:
    d = f.grid.d
    return default_lattice(f, T if T is not None else (400.0 if d == 1 else 60.0), X)


def _lattice_quotient(f: SurfaceDensity, grid: SpaceTimeGrid, tag: ConventionTag):
    F = extend_sphere(f, grid, tag).values
    p = strichartz_exponent(f.grid.d)
    total = float(np.sum(np.abs(F) ** p) * grid.cell_weight)
    return total ** (1 / p) / l2_sigma_norm(f), F


def _restrict(G: np.ndarray, f: SurfaceDensity, grid: SpaceTimeGrid, tag: ConventionTag) -> np.ndarray:
    """Adjoint of the lattice extension against the sigma inner product:
    conj(c) sum_lattice w G(x, t) exp(-i s (x.xi + t xi_{d+1}))."""
    d = f.grid.d
    pts = f.grid.points
    s = tag.sign
    out = np.zeros(len(pts), dtype=complex)
    xs = grid.xs
    Gt = G.T  # (nx^d, nt)
    time_ph = np.exp(-1j * s * np.outer(grid.ts, pts[:, d]))  # (nt, n)
    for i in range(0, len(xs), CHUNK):
        E = np.exp(-1j * s * (xs[i:i + CHUNK] @ pts[:, :d].T))  # (chunk, n)
        out += np.sum((Gt[i:i + CHUNK] @ time_ph) * E, axis=0)
    return np.conj(tag.prefactor) * grid.cell_weight * out


def ascend_R(d: int, init: SurfaceDensity, steps: int = 50,
             cfg: Optional[AscentConfig] = None, conv: Optional[ConventionTag] = None,
             grid: Optional[SpaceTimeGrid] = None) -> AscentState:
    """Maximize the lattice quotient (sum_lattice |F|^p w)^{1/p} / ||f|| by
    normalized adjoint-power steps f <- normalize((1 - tau) f + tau A / ||A||)
    with A = E*(|F|^{p-2} F), halving tau until the quotient does not drop.

    The lattice sum omits a positive remainder, so every accepted quotient
    is a lower bound for the quotient of that density.
    """
    cfg = cfg or AscentConfig(steps=steps)
    if init.grid.d != d:
        raise DomainError("dimension mismatch")
    if abs(l2_sigma_norm(init) - 1.0) > 1e-12:
        raise ValidationError("ascent needs a unit-norm initial density")
    tag = _tag(conv, init, d)
    grid = grid or ascent_lattice(init, cfg.T, cfg.X)
    p = strichartz_exponent(d)
    f = init
    q, F = _lattice_quotient(f, grid, tag)
    state = AscentState(f, q, 0, [(0.0, q)], lattice=grid)
    calm = 0
    for it in range(1, cfg.steps + 1):
        A = _restrict(np.abs(F) ** (p - 2) * F, f, grid, tag)
        nA = math.sqrt(float(np.sum(f.grid.sigma_weights * np.abs(A) ** 2)))
        if nA == 0:
            state.stalled = True
            break
        target = f.with_values(A / nA)
        tau = 1.0
        accepted = False
        while tau >= cfg.min_step:
            cand = f.with_values((1 - tau) * f.values + tau * target.values).normalized()
            q_new, F_new = _lattice_quotient(cand, grid, tag)
            if q_new >= q:
                accepted = True
                break
            tau /= 2
        if not accepted:
            state.stalled = True
            state.converged = True
            break
        rel = (q_new - q) / q
        f, q, F = cand, q_new, F_new
        state.density, state.quotient, state.iteration = f, q, it
        state.step_history.append((tau, q))
        calm = calm + 1 if rel < cfg.tol else 0
        if calm >= cfg.patience:
            state.converged = True
            break
    return state


# ----------------------------------------------------------------------------
# Concentration curve
# ----------------------------------------------------------------------------


TRIAL_WIDTH = 0.25


def concentration_trial(d: int, r: float, center: Optional[np.ndarray] = None, n: int = 48,
                        width: float = TRIAL_WIDTH, conv=None) -> SurfaceDensity:
    """f(Phi_C(y)) = r^{-d/2} (1 - r^2|y|^2)^{1/4} exp(-|y|^2 / (2 width^2))
    on C(center, r), normalized."""
    if not (0.0 < r <= 0.5):
        raise DomainError("trial radii must lie in (0, 1/2]")
    center = north_pole(d) if center is None else np.asarray(center, dtype=float)
    cap = CapSpec(center, r)
    grid = build_cap_grid(cap, n)
    y2 = np.sum(grid.nodes ** 2, 1)
    v = r ** (-d / 2) * (1 - r * r * y2) ** 0.25 * np.exp(-y2 / (2 * width ** 2))
    return SurfaceDensity(grid, v, conv).normalized()


def concentration_curve(d: int, radii: Sequence[float] = (0.4, 0.2, 0.1, 0.05),
                        conv: Optional[ConventionTag] = None, center=None, n: int = 48,
                        resolution=None) -> list[tuple[float, float, float]]:
    """(r, quotient, uncertainty) for the rescaled-Gaussian trial densities."""
    tag = conv or ConventionTag.fourier(d)
    out = []
    for r in radii:
        f = concentration_trial(d, r, center, n, conv=tag)
        q = sphere_quotient(f, tag, resolution=resolution)
        out.append((float(r), q.value, q.uncertainty))
    return out


# ----------------------------------------------------------------------------
# Comparison
# ----------------------------------------------------------------------------


def verdict(R_est: Estimate, R_P_est: Estimate) -> str:
    if R_est.value - R_est.uncertainty > R_P_est.value + R_P_est.uncertainty:
        return "R_greater"
    if R_P_est.value - R_P_est.uncertainty > R_est.value + R_est.uncertainty:
        return "R_P_greater"
    return "inconclusive"


@dataclass
class ComparisonReport:
    d: int
    R_est: Estimate
    R_P_est: Estimate
    concentration_curve: list
    verdict: str
    convention: ConventionTag
    ascents: list = field(default_factory=list)
    R_P_as_written: float = math.nan
    note: str = "numerical indication only, not a proof"

    def to_json(self) -> dict:
        pref = {"fourier": (2 * math.pi) ** (-(self.d + 1) / 2), "bare": 1.0}
        return {"d": self.d, "R_est": self.R_est.to_json(), "R_P_est": self.R_P_est.to_json(),
                "concentration_curve": [list(c) for c in self.concentration_curve],
                "verdict": self.verdict, "convention": self.convention.to_json(),
                "conversion": {"prefactors": pref,
                               "R_P_as_written": self.R_P_as_written,
                               "as_written_rule": "(2 pi)^{-(d+2)/d} (bare R_P)^p"},
                "ascents": self.ascents, "note": self.note}


def initial_densities(d: int, n: Optional[int] = None, seed: int = 0) -> dict:
    """Constant on Gamma, rescaled Gaussian on C(north, 0.2), random smooth bump."""
    n = n or (128 if d == 1 else 24)
    grid = build_disk_grid(d, n)
    const = SurfaceDensity(grid, np.ones(grid.size)).normalized()
    gauss = concentration_trial(d, 0.2, n=n)
    rng = np.random.default_rng(seed)
    c = rng.uniform(-0.25, 0.25, d)
    w = rng.uniform(0.08, 0.2)
    ph = rng.normal(size=d)
    u = grid.points[:, :d]
    v = np.exp(-np.sum((u - c) ** 2, 1) / (2 * w * w)) * np.exp(1j * (u @ ph))
    bump = SurfaceDensity(grid, v).normalized()
    return {"constant": const, "gaussian_cap": gauss, "random_bump": bump}


def comparison_report(d: int, conv: Optional[ConventionTag] = None, steps: int = 40,
                      radii: Sequence[float] = (0.4, 0.2, 0.1, 0.05), seed: int = 0,
                      n: Optional[int] = None, cfg: Optional[AscentConfig] = None
                      ) -> ComparisonReport:
    """R_P from Gaussians, R from ascents out of three initializations and
    the concentration curve; R_est is the largest quotient found, each
    evaluated on the convolution path with its uncertainty."""
    tag = conv or ConventionTag.fourier(d)
    rp = estimate_R_P(d, tag)
    curve = concentration_curve(d, radii, tag)
    cands = [(q, u, f"curve r={r}") for r, q, u in curve]
    ascents = []
    cfg = cfg or AscentConfig(steps=steps)
    for name, f0 in initial_densities(d, n, seed).items():
        st = ascend_R(d, f0.with_values(f0.values), cfg=cfg, conv=tag)
        q = sphere_quotient(st.density, tag)
        cands.append((q.value, q.uncertainty, f"ascent {name}"))
        ascents.append({"init": name, "lattice_quotient": st.quotient,
                        "quotient": q.value, "uncertainty": q.uncertainty,
                        "iterations": st.iteration, "converged": st.converged,
                        "history": [list(h) for h in st.step_history]})
    best = max(cands, key=lambda c: c[0])
    R_est = Estimate(best[0], best[1])
    return ComparisonReport(d, R_est, rp.estimate, curve, verdict(R_est, rp.estimate), tag,
                            ascents + [{"selected": best[2]}], rp.as_written)
