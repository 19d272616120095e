"""Cap-localized norms, the cap-concentration functional, refined
Tomas-Stein diagnostics and bilinear interaction decay between caps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError, FitError
from .extension import (ConventionTag, _tag, extend_sphere, sphere_quotient,
                        strichartz_exponent)
from .geometry import CapNet, CapSpec, build_cap_net, cap_sigma_measure
from .quadrature import (NormEstimate, SpaceTimeField, SpaceTimeGrid, SurfaceDensity,
                         build_cap_grid, l2_sigma_norm, lp_norm, spectral_widths,
                         suggest_lattice)


@lru_cache(maxsize=64)
def _net_cached(d: int, k: int, center: tuple, ang: float) -> CapNet:
    if k <= 1:
        return build_cap_net(d, k)
    region = CapSpec(np.asarray(center), math.sin(min(ang, math.pi / 2)))
    return build_cap_net(d, k, region)


def nets_for(f: SurfaceDensity, max_level: int) -> list[CapNet]:
    """Nets of levels 0..max_level covering the support of f's grid."""
    c, ang = f.grid.support_cone()
    key = tuple(np.round(c, 15))
    return [_net_cached(f.grid.d, k, key, round(ang, 15)) for k in range(max_level + 1)]


def _cap_members(points: np.ndarray, tree: cKDTree, z: np.ndarray, rad: float) -> np.ndarray:
    if rad >= 1.0:
        return np.flatnonzero(points @ z >= 0.0)
    chord = 2.0 * math.sin(math.asin(rad) / 2.0)
    idx = np.asarray(tree.query_ball_point(z, chord * (1 + 1e-9)), dtype=int)
    if idx.size == 0:
        return idx
    h = points[idx] @ z
    proj = np.sqrt(np.maximum(1.0 - h * h, 0.0))
    return idx[(h >= 0) & (proj < rad)]


def cap_integrals(f: SurfaceDensity, net: CapNet, power: float = 1.0) -> tuple[np.ndarray, float]:
    """int_C |f|^power dsigma for every cap C(z, 2^{-k+1}) of a net, and |C|."""
    pts = f.grid.points
    tree = cKDTree(pts)
    rad = min(2.0 * net.separation, 1.0)
    w = f.grid.sigma_weights * np.abs(f.values) ** power
    vals = np.array([np.sum(w[_cap_members(pts, tree, z, rad)]) for z in net.centers])
    return vals, cap_sigma_measure(f.grid.d, rad)


def xpq_norm(f: SurfaceDensity, p: float, q: Optional[float] = None, max_level: int = 4,
             table: bool = False):
    """(sum_k sum_j |C|^{q/2} (|C|^{-1} int_C |f|^p)^{q/p})^{1/q} over net caps
    of levels 0..max_level; |C| is the sigma measure."""
    if not (1.0 < p < 2.0):
        raise DomainError("p must lie in (1, 2)")
    d = f.grid.d
    q = 2.0 * (d + 2) / d if q is None else q
    per_level = []
    for net in nets_for(f, max_level):
        I, area = cap_integrals(f, net, p)
        per_level.append(float(np.sum(area ** (q / 2) * (I / area) ** (q / p))))
    total = math.fsum(per_level) ** (1.0 / q)
    return (total, per_level) if table else total


@dataclass(frozen=True)
class ConcentrationReport:
    best_cap: Optional[CapSpec]
    value: float
    per_level: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"value": self.value,
                "best_cap": None if self.best_cap is None else self.best_cap.to_json(),
                "per_level": self.per_level}


def cap_concentration(f: SurfaceDensity, max_level: int = 4) -> ConcentrationReport:
    """sup over net caps (levels 0..max_level) of |C|^{-1/2} int_C |f| dsigma.

    Ties are broken by the distance from the cap center to the
    |f|^2-weighted barycenter of f, then by level and net order.
    """
    absf2 = f.grid.sigma_weights * np.abs(f.values) ** 2
    bary = absf2 @ f.grid.points
    nb = np.linalg.norm(bary)
    bary = bary / nb if nb > 0 else f.grid.points[0]
    best = (0.0, math.inf, None)
    rows = []
    for net in nets_for(f, max_level):
        I, area = cap_integrals(f, net, 1.0)
        score = I / math.sqrt(area)
        j = int(np.argmax(score)) if len(score) else 0
        m = float(score[j]) if len(score) else 0.0
        rows.append({"level": net.level, "value": m, "count": len(score)})
        if m <= 0:
            continue
        tied = np.flatnonzero(score >= m * (1 - 1e-12))
        dist = np.linalg.norm(net.centers[tied] - bary, axis=1)
        jj = int(tied[int(np.argmin(dist))])
        cand = (m, float(np.min(dist)), CapSpec(net.centers[jj], min(2 * net.separation, 1.0)))
        if cand[0] > best[0] * (1 + 1e-12) or (cand[0] >= best[0] * (1 - 1e-12) and cand[1] < best[1]):
            best = cand
    return ConcentrationReport(best[2], best[0], rows)


@dataclass(frozen=True)
class RefinedRecord:
    extension_norm: float
    concentration: float
    l2: float

    def to_json(self) -> dict:
        return {"extension_norm": self.extension_norm, "concentration": self.concentration,
                "l2": self.l2}


def refined_inequality_report(f: SurfaceDensity, max_level: int = 4,
                              conv: Optional[ConventionTag] = None) -> RefinedRecord:
    """(||F||_{2+4/d}, concentration, ||f||_2) for one density."""
    n = l2_sigma_norm(f)
    if n == 0:
        raise DomainError("zero density")
    q = sphere_quotient(f, conv)
    return RefinedRecord(q.value * n, cap_concentration(f, max_level).value, n)


@dataclass(frozen=True)
class EnvelopeFit:
    """Smallest C(alpha) with ext <= C conc^alpha l2^{1-alpha} on a corpus."""

    alphas: list
    constants: list
    alpha: float
    constant: float

    def bound(self, rec: RefinedRecord, alpha: Optional[float] = None) -> float:
        a = self.alpha if alpha is None else alpha
        c = self.constant if alpha is None else self.constants[self.alphas.index(alpha)]
        return c * rec.concentration ** a * rec.l2 ** (1 - a)

    def to_json(self) -> dict:
        return {"alphas": self.alphas, "constants": self.constants,
                "alpha": self.alpha, "constant": self.constant}


def fit_envelope(records: Sequence[RefinedRecord], alphas: Optional[Sequence[float]] = None) -> EnvelopeFit:
    """For each alpha, the corpus maximum of ext / (conc^alpha l2^{1-alpha});
    the reported (alpha, C) minimizes C."""
    if not records:
        raise FitError("empty corpus")
    alphas = list(alphas) if alphas is not None else [round(0.05 * i, 2) for i in range(1, 20)]
    cs = []
    for a in alphas:
        cs.append(max(r.extension_norm / (r.concentration ** a * r.l2 ** (1 - a)) for r in records))
    j = int(np.argmin(cs))
    return EnvelopeFit(alphas, cs, alphas[j], cs[j])


# ----------------------------------------------------------------------------
# Bilinear interaction
# ----------------------------------------------------------------------------


def _cap_of(f: SurfaceDensity) -> tuple[np.ndarray, float]:
    c, ang = f.grid.support_cone()
    return c, ang


def bilinear_lattice(f1: SurfaceDensity, f2: SurfaceDensity, T: float, X: float,
                     q: float) -> SpaceTimeGrid:
    """Lattice resolving the band limit of |F1 F2|^q for even q."""
    w1 = spectral_widths(f1.grid.points)
    w2 = spectral_widths(f2.grid.points)
    p = q if q >= 2 and float(q).is_integer() and q % 2 == 0 else 2.0
    return suggest_lattice(f1.grid.d, p, w1[0] + w2[0], w1[1] + w2[1], T, X)


def _group_speed(c: np.ndarray, ang: float) -> float:
    s = min(math.sin(math.acos(min(1.0, abs(float(c[-1]))))) + math.sin(ang), 0.99)
    return s / math.sqrt(1.0 - s * s)


def bilinear_window(f1: SurfaceDensity, f2: SurfaceDensity) -> tuple[float, float]:
    """(T, X) covering the crossing of the two wave packets: about eight
    crossing times in t and the packets' reach in x."""
    c1, a1 = _cap_of(f1)
    c2, a2 = _cap_of(f2)
    r = max(math.sin(a1), math.sin(a2))
    sep = max(float(np.linalg.norm(c1 - c2)), r)
    T = 8.0 / (r * sep)
    v = max(_group_speed(c1, a1), _group_speed(c2, a2))
    return T, 4.0 / r + T * v


def bilinear_interaction(f1: SurfaceDensity, f2: SurfaceDensity, q: Optional[float] = None,
                         grid: Optional[SpaceTimeGrid] = None,
                         conv: Optional[ConventionTag] = None) -> NormEstimate:
    """||F1 F2||_{L^q} on a lattice, q = (d+2)/d by default."""
    d = f1.grid.d
    q = (d + 2) / d if q is None else q
    c1, a1 = _cap_of(f1)
    c2, a2 = _cap_of(f2)
    if math.acos(min(1.0, float(np.dot(c1, c2)))) < a1 + a2 - 1e-12:
        raise DomainError("bilinear interaction needs disjoint caps")
    tag = _tag(conv, f1, d)
    if grid is None:
        grid = bilinear_lattice(f1, f2, *bilinear_window(f1, f2), q)
    F1 = extend_sphere(f1, grid, tag).values
    F2 = extend_sphere(f2, grid, tag).values
    prod = SpaceTimeField(grid, F1 * F2, decay=d * (q - 1))
    return lp_norm(prod, q)


@dataclass(frozen=True)
class BilinearDecayFit:
    separations: list
    norms: list
    alpha_hat: float
    r2: float
    intercept: float = 0.0

    def to_json(self) -> dict:
        return {"separations": self.separations, "norms": self.norms,
                "alpha_hat": self.alpha_hat, "r2": self.r2, "intercept": self.intercept}


def decay_fit(points: Sequence[tuple[float, float]]) -> BilinearDecayFit:
    """Least squares log(norm) = c - alpha log(N)."""
    if len(points) < 3:
        raise FitError("need at least 3 points")
    N = np.array([float(a) for a, _ in points])
    v = np.array([float(b) for _, b in points])
    if np.any(N <= 1) or np.any(v <= 0):
        raise FitError("separations must exceed 1 and norms must be positive")
    x, y = np.log(N), np.log(v)
    if np.ptp(x) == 0:
        raise FitError("separations are all equal")
    A = np.column_stack([np.ones_like(x), x])
    (c, slope), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ np.array([c, slope])
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if sst <= 1e-30 else 1.0 - float(np.sum(res ** 2)) / sst
    alpha = -float(slope)
    if abs(alpha) < 1e-14:
        alpha = 0.0
    return BilinearDecayFit(N.tolist(), v.tolist(), alpha, r2, float(c))


def cap_bump(u, r: float, n: int = 32) -> SurfaceDensity:
    """Normalized smooth bump exp(1 - 1/(1 - |y|^2)) on the cap of radius r
    centred at the sphere point above u."""
    u = np.asarray(u, dtype=float)
    cap = CapSpec(np.r_[u, math.sqrt(1.0 - float(u @ u))], r)
    g = build_cap_grid(cap, n)
    rho2 = np.sum(g.nodes ** 2, 1)
    v = np.zeros_like(rho2)
    inside = rho2 < 1
    v[inside] = np.exp(1.0 - 1.0 / (1.0 - rho2[inside]))
    return SurfaceDensity(g, v).normalized()


def bilinear_decay(d: int = 2, r: float = 0.025, separations: Sequence[float] = (4, 8, 16, 32),
                   n: int = 32, conv: Optional[ConventionTag] = None) -> BilinearDecayFit:
    """Interaction norms of two r-cap bumps placed symmetrically about the
    pole at distance N r, fitted against N."""
    if d not in (1, 2):
        raise DomainError("d must be 1 or 2")
    conv = conv or ConventionTag.bare(d)
    pts = []
    for N in separations:
        e = np.zeros(d)
        e[0] = N * r / 2
        f1, f2 = cap_bump(e, r, n), cap_bump(-e, r, n)
        pts.append((float(N), bilinear_interaction(f1, f2, conv=conv).value))
    return decay_fit(pts)
