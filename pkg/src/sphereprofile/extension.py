"""Extension operator on the sphere, the free Schrodinger propagator, the
Gaussian closed form, the rescaling factorization and even-exponent norms
through autoconvolutions of the surface measure.

Space-time points are X = (x, t) with x in R^d pairing with the first d
sphere coordinates and t with the last one, so that for a density f

    F(x, t) = c * int f(eta) exp(i s (x . eta' + t eta_{d+1})) dsigma(eta)

with (c, s) fixed by a ConventionTag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.special import erf, gamma

from .errors import DomainError
from .geometry import CapSpec, cap_frame
from .quadrature import (DiskGrid, FlatGrid, FlatSamples, NormEstimate, SpaceTimeField,
                         SpaceTimeGrid, SurfaceDensity, l1_sigma_norm, l2_sigma_norm,
                         lp_norm, quadrature_reach, spectral_widths, suggest_lattice)

CHUNK = 2048


def strichartz_exponent(d: int) -> float:
    return 2.0 + 4.0 / d


@dataclass(frozen=True)
class ConventionTag:
    """Normalization of the extension operator: prefactor and exponent sign."""

    prefactor: float
    sign: int
    name: str

    @classmethod
    def fourier(cls, d: int) -> "ConventionTag":
        """(2 pi)^{-(d+1)/2} with exp(-i xi . x)."""
        return cls((2 * math.pi) ** (-(d + 1) / 2), -1, "fourier")

    @classmethod
    def bare(cls, d: int) -> "ConventionTag":
        """No prefactor, exp(+i xi . x)."""
        return cls(1.0, 1, "bare")

    @classmethod
    def named(cls, name: str, d: int) -> "ConventionTag":
        if name == "fourier":
            return cls.fourier(d)
        if name == "bare":
            return cls.bare(d)
        raise DomainError(f"unknown convention {name!r}")

    def to_json(self) -> dict:
        return {"name": self.name, "prefactor": self.prefactor, "sign": self.sign}


def _tag(conv: Optional[ConventionTag], f: Optional[SurfaceDensity], d: int) -> ConventionTag:
    if conv is not None:
        return conv
    if f is not None and isinstance(f.convention, ConventionTag):
        return f.convention
    return ConventionTag.fourier(d)


@dataclass(frozen=True)
class ModulationParams:
    """Modulation T_(x,t) g = exp(-i t |y|^2 / 2) exp(i x . y) g."""

    x: tuple
    t: float

    def __post_init__(self):
        x = tuple(float(v) for v in np.atleast_1d(self.x))
        if not all(math.isfinite(v) for v in x) or not math.isfinite(float(self.t)):
            raise DomainError("modulation parameters must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))

    def phase(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(len(y), -1)
        return np.exp(-0.5j * self.t * np.sum(y * y, 1) + 1j * (y @ np.asarray(self.x)))

    def to_json(self) -> dict:
        return {"x": list(self.x), "t": self.t}


# ----------------------------------------------------------------------------
# Extension operator
# ----------------------------------------------------------------------------


def _sphere_envelope(f: SurfaceDensity, c: float):
    d = f.grid.d
    eta_last = f.grid.points[:, d]
    sig = f.grid.sigma_weights
    absf = np.abs(f.values)
    if np.any((eta_last <= 0) & (absf > 0)):
        return None

    def env(p):
        kappa = d * p / 2 - d - 2
        mass = np.sum(sig * np.where(absf > 0, eta_last, 1.0) ** (kappa + 1) * absf ** p)
        return d * p / 2 - d, abs(c) ** p * (2 * math.pi) ** (d * p / 2) * mass
    return env


def extend_sphere(f: SurfaceDensity, grid: SpaceTimeGrid,
                  conv: Optional[ConventionTag] = None) -> SpaceTimeField:
    """Direct quadrature of the extension of f dsigma at every lattice point."""
    d = f.grid.d
    if grid.d != d:
        raise DomainError("lattice and density dimensions differ")
    tag = _tag(conv, f, d)
    pts = f.grid.points
    s = tag.sign
    coef = tag.prefactor * f.grid.sigma_weights * f.values
    C = coef[:, None] * np.exp(1j * s * np.outer(pts[:, d], grid.ts))
    xs = grid.xs
    out = np.empty((len(xs), grid.nt), dtype=complex)
    for i in range(0, len(xs), CHUNK):
        E = np.exp(1j * s * (xs[i:i + CHUNK] @ pts[:, :d].T))
        out[i:i + CHUNK] = E @ C
    return SpaceTimeField(grid, out.T.copy(), _sphere_envelope(f, tag.prefactor))


def extend_at(f: SurfaceDensity, X: np.ndarray, conv: Optional[ConventionTag] = None) -> np.ndarray:
    """Extension evaluated at arbitrary space-time points X of shape (M, d+1)."""
    d = f.grid.d
    tag = _tag(conv, f, d)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    coef = tag.prefactor * f.grid.sigma_weights * f.values
    out = np.empty(len(X), dtype=complex)
    for i in range(0, len(X), CHUNK):
        out[i:i + CHUNK] = np.exp(1j * tag.sign * (X[i:i + CHUNK] @ f.grid.points.T)) @ coef
    return out


# ----------------------------------------------------------------------------
# Schrodinger propagator
# ----------------------------------------------------------------------------

TimeMultiplier = Callable[[float, np.ndarray], np.ndarray]


def schrodinger_evolve(phi: FlatSamples, grid: SpaceTimeGrid,
                       h: Optional[TimeMultiplier] = None) -> SpaceTimeField:
    """u(t, x) = int exp(i x.y - i t |y|^2 / 2) h(t, y) phi(y) dy on a lattice."""
    y = phi.grid.nodes
    d = phi.grid.d
    base = phi.grid.weights * phi.values
    q = np.sum(y * y, 1)
    ts = grid.ts
    C = np.exp(-0.5j * np.outer(q, ts)) * base[:, None]
    if h is not None:
        C *= np.column_stack([h(t, y) for t in ts])
    xs = grid.xs
    out = np.empty((len(xs), grid.nt), dtype=complex)
    for i in range(0, len(xs), CHUNK):
        out[i:i + CHUNK] = np.exp(1j * (xs[i:i + CHUNK] @ y.T)) @ C
    env = None
    if h is None:
        absphi = np.abs(phi.values)

        def env(p):
            return d * p / 2 - d, (2 * math.pi) ** (d * p / 2) * np.sum(phi.grid.weights * absphi ** p)
    return SpaceTimeField(grid, out.T.copy(), env)


def evolve_at(phi: FlatSamples, X: np.ndarray, h: Optional[TimeMultiplier] = None) -> np.ndarray:
    """Propagator at arbitrary points X = (x, t), shape (M, d+1)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = phi.grid.nodes
    d = phi.grid.d
    base = phi.grid.weights * phi.values
    q = np.sum(y * y, 1)
    out = np.empty(len(X), dtype=complex)
    for i, pt in enumerate(X):
        amp = base if h is None else base * h(pt[d], y)
        out[i] = np.sum(amp * np.exp(1j * (y @ pt[:d]) - 0.5j * pt[d] * q))
    return out


def gaussian_evolution_analytic(d: int, t, x) -> np.ndarray:
    """Evolution of exp(-|y|^2/2) under the unnormalized propagator.

    Completing the square in int exp(i x.y - (1 + i t)|y|^2 / 2) dy gives
    (2 pi / (1 + i t))^{d/2} exp(-|x|^2 / (2 (1 + i t))), principal branch
    (Re(1 + i t) > 0).
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, -1) if x.ndim and x.shape[-1] == d else x * x
    a = 1.0 + 1j * t
    return (2 * np.pi / a) ** (d / 2) * np.exp(-r2 / (2 * a))


def gaussian_lp_integral(d: int, p: float) -> float:
    """int_{R^{1+d}} |u|^p for the evolved Gaussian.

    |u|^p = (2 pi)^{dp/2} (1+t^2)^{-dp/4} exp(-p|x|^2 / (2(1+t^2))); the x
    integral gives (2 pi (1+t^2)/p)^{d/2}, leaving int (1+t^2)^{-beta} dt
    with beta = dp/4 - d/2, which equals sqrt(pi) Gamma(beta-1/2)/Gamma(beta)
    (= pi when p = 2 + 4/d).
    """
    beta = d * p / 4 - d / 2
    if beta <= 0.5:
        raise DomainError("the Gaussian L^p integral diverges for this p")
    tint = math.sqrt(math.pi) * gamma(beta - 0.5) / gamma(beta)
    return (2 * math.pi) ** (d * p / 2) * (2 * math.pi / p) ** (d / 2) * tint


def gaussian_lp_box_integral(d: int, p: float, T: float, X: float) -> float:
    """int over [-T, T] x [-X, X]^d of |u|^p, reduced to a 1D integral."""
    def integrand(t):
        s = 1.0 + t * t
        one = math.sqrt(2 * math.pi * s / p) * erf(X * math.sqrt(p / (2 * s)))
        return (2 * math.pi) ** (d * p / 2) * s ** (-d * p / 4) * one ** d
    return 2.0 * quad(integrand, 0.0, T, epsabs=0.0, epsrel=1e-13, limit=400)[0]


def gaussian_l2_squared(d: int) -> float:
    return math.pi ** (d / 2)


# ----------------------------------------------------------------------------
# Quotients
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class QuotientEstimate:
    """An L^p / L^2 quotient with uncertainty and provenance."""

    value: float
    uncertainty: float
    method: str
    convention: ConventionTag
    resolution: dict

    def to_json(self) -> dict:
        return {"value": self.value, "uncertainty": self.uncertainty, "method": self.method,
                "convention": self.convention.to_json(), "resolution": self.resolution}


def strichartz_quotient(phi: FlatSamples, d: int, grid: Optional[SpaceTimeGrid] = None,
                        conv: Optional[ConventionTag] = None) -> QuotientEstimate:
    """||e^{it Delta/2} phi||_p / ||phi||_2 with p = 2 + 4/d, times the tag's
    prefactor (the value the sphere quotient tends to under concentration).
    """
    tag = conv or ConventionTag.fourier(d)
    nrm = phi.l2()
    if nrm == 0:
        raise DomainError("zero profile")
    p = strichartz_exponent(d)
    if grid is None:
        # Packets from frequency y travel at speed |y|, so the box must hold
        # x ~ R t for the radius R carrying all but 1e-12 of |phi|^p.
        rho = np.linalg.norm(phi.grid.nodes, axis=1)
        order = np.argsort(rho)[::-1]
        mass = np.cumsum((phi.grid.weights * np.abs(phi.values) ** p)[order])
        R = float(rho[order][np.searchsorted(mass, 1e-12 * mass[-1])])
        T = 60.0
        grid = suggest_lattice(d, p, 2 * R, R * R / 2, T=T, X=max(T, R * T + 10.0))
    est = lp_norm(schrodinger_evolve(phi, grid), p)
    return QuotientEstimate(tag.prefactor * est.value / nrm, tag.prefactor * est.uncertainty / nrm,
                            "space-time", tag, est.resolution)


def paraboloid_constant_bare(d: int) -> float:
    """Gaussian Strichartz quotient in the bare normalization."""
    p = strichartz_exponent(d)
    return gaussian_lp_integral(d, p) ** (1 / p) / math.sqrt(gaussian_l2_squared(d))


def paraboloid_constant_as_written(d: int) -> float:
    """(2 pi)^{-(d+2)/d} int |u|^p / ||phi||^p for the Gaussian: a p-th power."""
    p = strichartz_exponent(d)
    return (2 * math.pi) ** (-(d + 2) / d) * paraboloid_constant_bare(d) ** p


# ----------------------------------------------------------------------------
# Rescaling factorization
# ----------------------------------------------------------------------------


def phase_correction(r: float) -> TimeMultiplier:
    """h(t, y) = exp(i t ((sqrt(1 - r^2|y|^2) - 1)/r^2 + |y|^2/2)) (1 - r^2|y|^2)^{-1/4}."""
    def h(t, y):
        q = np.sum(np.asarray(y) ** 2, -1)
        root = np.sqrt(1.0 - r * r * q)
        curv = (root - 1.0) / (r * r) + q / 2.0
        return np.exp(1j * t * curv) / np.sqrt(root)
    return h


def rescale_factorize(f: SurfaceDensity, cap: CapSpec) -> tuple[FlatSamples, TimeMultiplier]:
    """g(y) = r^{d/2} f(Phi_C(y)) / (1 - r^2|y|^2)^{1/4} and the multiplier h."""
    from .geometry import pullback
    if cap.radius > 0.5:
        raise DomainError("rescaling needs r <= 1/2")
    pb = pullback(cap, f)
    y = pb.grid.nodes
    jac = (1.0 - cap.radius ** 2 * np.sum(y * y, 1)) ** 0.25
    return FlatSamples(pb.grid, pb.values / jac), phase_correction(cap.radius)


def unfactorize(g: FlatSamples, cap: CapSpec, grid: DiskGrid, conv=None) -> SurfaceDensity:
    """Inverse of rescale_factorize for g sampled on the chart of ``grid``."""
    if not grid.is_chart_of(cap) or not grid.chart.same_as(g.grid):
        raise DomainError("g must live on the chart grid of the cap")
    r, d = cap.radius, cap.d
    jac = (1.0 - r * r * np.sum(g.grid.nodes ** 2, 1)) ** 0.25
    return SurfaceDensity(grid, jac * r ** (-d / 2) * g.values, conv)


def rescaling_residual(f: SurfaceDensity, cap: CapSpec, grid: SpaceTimeGrid) -> float:
    """Max over lattice points (x', t') in the cap frame of
    | |F(M(x', t'))| - |r^{d/2} e^{i r^2 t' Delta/2}(h(r^2 t', .) g)(r x')| |."""
    d = cap.d
    g, h = rescale_factorize(f, cap)
    M = cap_frame(cap.center)
    xs = grid.xs
    pts = np.column_stack([np.repeat(xs, grid.nt, axis=0)[:, :d], np.tile(grid.ts, len(xs))])
    lhs = np.abs(extend_at(f, pts @ M.T, ConventionTag.bare(d)))
    r = cap.radius
    resc = np.column_stack([r * pts[:, :d], r * r * pts[:, d]])
    rhs = np.abs(r ** (d / 2) * _evolve_points(g, resc, h))
    return float(np.max(np.abs(lhs - rhs)))


def _evolve_points(g: FlatSamples, X: np.ndarray, h: TimeMultiplier) -> np.ndarray:
    y = g.grid.nodes
    d = g.grid.d
    q = np.sum(y * y, 1)
    base = g.grid.weights * g.values
    out = np.empty(len(X), dtype=complex)
    for i in range(0, len(X), CHUNK):
        Xc = X[i:i + CHUNK]
        ph = np.exp(1j * (Xc[:, :d] @ y.T) - 0.5j * np.outer(Xc[:, d], q))
        hv = np.stack([h(t, y) for t in Xc[:, d]])
        out[i:i + CHUNK] = np.sum(ph * hv * base, axis=1)
    return out


# ----------------------------------------------------------------------------
# Even exponents through autoconvolution (truncation free)
# ----------------------------------------------------------------------------


def _gl(n, a, b):
    g, w = np.polynomial.legendre.leggauss(n)
    return a + (b - a) * (g + 1) / 2, w * (b - a) / 2


def _conv_d1(fn, center, A, ns, nb, nq):
    """(2 pi)^2 int |nu3|^2 with nu3 = (f sigma)^{*3} on S^1."""
    c_ang = math.atan2(center[0], center[1])
    W = 2 * A
    smin = math.sqrt(max(5 + 4 * math.cos(W), 0.0)) if W < math.pi else 0.0
    sv, sw = _gl(ns, smin, 3.0)
    bv, bw = _gl(nb, c_ang - A, c_ang + A)
    S, B = np.meshgrid(sv, bv, indexing="ij")
    kap = (S * S - 3) / (2 * S)
    psi = np.arccos(np.clip(kap, -1, 1))
    tv, tw = _gl(nq, -math.pi / 2, math.pi / 2)
    th1 = B[..., None] + psi[..., None] * np.sin(tv)
    jac = psi[..., None] * np.cos(tv)
    wx = S[..., None] * np.sin(B)[..., None] - np.sin(th1)
    wt = S[..., None] * np.cos(B)[..., None] - np.cos(th1)
    wn = np.hypot(wx, wt)
    beta = np.arctan2(wx, wt)
    gam = np.arccos(np.clip(wn / 2, -1, 1))
    sg = np.sqrt(np.maximum(1 - wn * wn / 4, 0.0))

    def fa(a):
        shp = a.shape
        a = a.ravel()
        return fn(np.column_stack([np.sin(a), np.cos(a)])).reshape(shp)
    safe = np.where(sg > 0, sg, 1.0)
    val = fa(th1) * 2 * fa(beta + gam) * fa(beta - gam) / (wn * safe) * jac
    val = np.where(sg > 0, val, 0.0)
    nu3 = np.sum(val * tw, -1)
    return (2 * math.pi) ** 2 * float(np.sum(sw[:, None] * sv[:, None] * bw[None, :] * np.abs(nu3) ** 2))


def _conv_d2(fn, center, A, ns, na, nb, nq):
    """(2 pi)^3 int |nu|^2 with nu = (f sigma) * (f sigma) on S^2."""
    M = cap_frame(center)
    smin = 2 * math.cos(min(A, math.pi / 2))
    sv, sw = _gl(ns, smin, 2.0)
    av, aw = _gl(na, 0.0, min(A, math.pi / 2))
    bv = 2 * np.pi * np.arange(nb) / nb
    S, Al, Be = np.meshgrid(sv, av, bv, indexing="ij")
    dirs_local = np.stack([np.sin(Al) * np.cos(Be), np.sin(Al) * np.sin(Be), np.cos(Al)], -1)
    xh = dirs_local @ M.T
    wgt = (sw[:, None, None] * sv[:, None, None] ** 2) * (aw * np.sin(av))[None, :, None] * (2 * np.pi / nb)
    xh = xh.reshape(-1, 3)
    s = S.ravel()
    # orthonormal e1, e2 perpendicular to xh
    ref = np.where(np.abs(xh[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    e1 = ref - np.sum(ref * xh, 1, keepdims=True) * xh
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(xh, e1)
    tq = 2 * np.pi * np.arange(nq) / nq
    hgt = s / 2
    rad = np.sqrt(np.maximum(1 - hgt * hgt, 0))
    nu = np.empty(len(s), dtype=complex)
    step = max(1, 200000 // nq)
    for i in range(0, len(s), step):
        sl = slice(i, i + step)
        circ = (np.cos(tq)[None, :, None] * e1[sl, None, :] + np.sin(tq)[None, :, None] * e2[sl, None, :])
        eta = hgt[sl, None, None] * xh[sl, None, :] + rad[sl, None, None] * circ
        other = (s[sl, None, None] * xh[sl, None, :]) - eta
        k = eta.shape[:2]
        v = fn(eta.reshape(-1, 3)).reshape(k) * fn(other.reshape(-1, 3)).reshape(k)
        nu[sl] = v.mean(1) * 2 * np.pi / s[sl]
    total = float(np.sum(np.broadcast_to(wgt, S.shape).ravel() * np.abs(nu) ** 2))
    return (2 * math.pi) ** 3 * total


DEFAULT_CONV_RES = {1: ((64, 64, 96), (32, 32, 48)),
                    2: ((24, 24, 48, 96), (16, 16, 32, 64))}


def even_norm_via_convolution(f: SurfaceDensity, d: Optional[int] = None,
                              conv: Optional[ConventionTag] = None,
                              resolution=None) -> NormEstimate:
    """||F||_{2+4/d} from the 3-fold (d = 1) or 2-fold (d = 2) autoconvolution
    of f dsigma via Plancherel, integrated by fiber quadrature.

    The uncertainty is the change against a coarser quadrature.
    """
    d = f.grid.d if d is None else d
    if d not in (1, 2):
        raise DomainError("the convolution path supports d in {1, 2}")
    if d != f.grid.d:
        raise DomainError("dimension mismatch")
    tag = _tag(conv, f, d)
    p = strichartz_exponent(d)
    if not np.any(f.values):
        return NormEstimate(0.0, 0.0, 0.0, 0.0, p, {"method": "convolution"})
    fn = f.interpolant()
    center, A = f.grid.support_cone()
    fine, coarse = resolution or DEFAULT_CONV_RES[d]
    run = _conv_d1 if d == 1 else _conv_d2
    I_f = run(fn, center, A, *fine)
    I_c = run(fn, center, A, *coarse)
    val = I_f ** (1 / p)
    unc = abs(val - I_c ** (1 / p))
    c = tag.prefactor
    return NormEstimate(c * val, c * val, 0.0, c * unc, p,
                        {"method": "convolution", "fine": list(fine), "coarse": list(coarse)})


def group_speed(points: np.ndarray) -> float:
    """Largest |xi'| / xi_{d+1} over sphere points: the speed of the fastest
    wave packet they carry."""
    last = points[:, -1]
    if np.any(last <= 0):
        return math.inf
    return float(np.max(np.linalg.norm(points[:, :-1], axis=1) / last))


def default_lattice(f: SurfaceDensity, T: float, X: Optional[float] = None,
                    margin: float = 20.0) -> SpaceTimeGrid:
    """A band-limit-resolving lattice for the density's spectral support,
    clipped to the reach of the surface quadrature.  When X is clipped, T
    shrinks so that packets stay inside the spatial box up to time T."""
    d = f.grid.d
    p = strichartz_exponent(d)
    pts = f.grid.points[np.abs(f.values) > 0]
    if len(pts) == 0:
        pts = f.grid.points
    wx, wt = spectral_widths(pts)
    v = group_speed(pts)
    if X is None:
        X = max(v, 0.6) * T + margin
    X_max, T_max = quadrature_reach(f.grid)
    X = min(X, X_max)
    T = min(T, T_max)
    if v > 0 and X - margin < v * T:
        T = max((X - margin) / v, X / (2 * v))
    return suggest_lattice(d, p, wx + 1e-3, wt + 1e-3, T, X)


def sphere_quotient(f: SurfaceDensity, conv: Optional[ConventionTag] = None,
                    method: str = "auto", grid: Optional[SpaceTimeGrid] = None,
                    resolution=None) -> QuotientEstimate:
    """||F||_{2+4/d} / ||f||_{L^2(sigma)}: convolution path when available,
    otherwise the tail-corrected space-time path."""
    d = f.grid.d
    tag = _tag(conv, f, d)
    nrm = l2_sigma_norm(f)
    if nrm == 0:
        raise DomainError("the quotient of the zero density is undefined")
    has_chart = f.grid.chart is not None or bool(f.grid.parts)
    if method == "auto":
        method = "convolution" if d in (1, 2) and has_chart and grid is None else "space-time"
    if method == "convolution":
        est = even_norm_via_convolution(f, d, tag, resolution)
    else:
        grid = grid or default_lattice(f, T=120.0 if d == 2 else 400.0)
        est = lp_norm(extend_sphere(f, grid, tag), strichartz_exponent(d))
    return QuotientEstimate(est.value / nrm, est.uncertainty / nrm, method, tag, est.resolution)


def pointwise_bound(f: SurfaceDensity, conv: Optional[ConventionTag] = None) -> float:
    """prefactor * ||f||_{L^1(sigma)}, a pointwise bound on the extension."""
    return _tag(conv, f, f.grid.d).prefactor * l1_sigma_norm(f)
