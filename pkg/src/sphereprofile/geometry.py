"""Spherical caps, separated nets, rescaled charts and dyadic Whitney pairs.

Points of S^d are stored as arrays of length d+1 whose last coordinate is the
"vertical" one, so the north pole is (0, ..., 0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError, ResolutionError

UNIT_TOL = 1e-9


def north_pole(d: int) -> np.ndarray:
    z = np.zeros(d + 1)
    z[-1] = 1.0
    return z


def _check_unit(p: np.ndarray, tol: float = UNIT_TOL) -> None:
    norms = np.linalg.norm(p, axis=-1)
    if not np.all(np.abs(norms - 1.0) <= tol):
        raise DomainError("points must lie on the unit sphere")


@dataclass(frozen=True, eq=False)
class CapSpec:
    """The cap C(z, r): points of z's hemisphere whose projection onto z^perp
    has length < r."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        z = np.asarray(self.center, dtype=float).copy()
        if z.ndim != 1 or z.size < 2:
            raise DomainError("cap center must be a vector in R^{d+1}")
        if abs(np.linalg.norm(z) - 1.0) > 1e-12:
            raise DomainError("cap center must be a unit vector")
        r = float(self.radius)
        if not (0.0 < r <= 1.0):
            raise DomainError("cap radius must lie in (0, 1]")
        z.setflags(write=False)
        object.__setattr__(self, "center", z)
        object.__setattr__(self, "radius", r)

    @property
    def d(self) -> int:
        return self.center.size - 1

    @property
    def angular_radius(self) -> float:
        return math.asin(min(self.radius, 1.0))

    @property
    def measure(self) -> float:
        return cap_sigma_measure(self.d, self.radius)

    @property
    def frame(self) -> np.ndarray:
        return cap_frame(self.center)

    def to_json(self) -> dict:
        return {"center": [float(c) for c in self.center], "radius": self.radius}


def unit(v: Sequence[float]) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def cap_sigma_measure(d: int, radius: float) -> float:
    """Surface measure of C(z, radius) on S^d (closed form for d = 1, 2)."""
    theta = math.asin(min(radius, 1.0))
    if d == 1:
        return 2.0 * theta
    if d == 2:
        return 2.0 * math.pi * (1.0 - math.cos(theta))
    from scipy.integrate import quad
    area = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)  # |S^{d-1}|
    return area * quad(lambda s: math.sin(s) ** (d - 1), 0.0, theta)[0]


def cap_frame(z: np.ndarray) -> np.ndarray:
    """Orthogonal matrix M with last column z; the first d columns (the
    isometry L_z onto z^perp) come from Gram-Schmidt on the standard basis."""
    z = np.asarray(z, dtype=float)
    n = z.size
    cols = []
    for i in range(n):
        v = np.zeros(n)
        v[i] = 1.0
        v -= np.dot(v, z) * z
        for c in cols:
            v -= np.dot(v, c) * c
        nv = np.linalg.norm(v)
        if nv < 1e-6:
            continue
        cols.append(v / nv)
        if len(cols) == n - 1:
            break
    M = np.column_stack(cols + [z])
    # Re-orthonormalize once for accuracy.
    q, rr = np.linalg.qr(M)
    q *= np.sign(np.diag(rr))
    return q


def cap_contains(cap: CapSpec, p) -> np.ndarray | bool:
    """Strict membership test; accepts one point or an array of points."""
    p = np.asarray(p, dtype=float)
    _check_unit(p)
    z = cap.center
    h = p @ z
    proj2 = np.maximum(np.sum(p * p, axis=-1) - h * h, 0.0)
    out = (h >= 0.0) & (np.sqrt(proj2) < cap.radius)
    return bool(out) if out.ndim == 0 else out


def rescaled_map(cap: CapSpec, y) -> np.ndarray:
    """Phi_C(y) = M (r y, sqrt(1 - r^2 |y|^2)); y has shape (..., d)."""
    y = np.asarray(y, dtype=float)
    r = cap.radius
    ry2 = r * r * np.sum(y * y, axis=-1)
    if np.any(ry2 >= 1.0):
        raise DomainError("rescaled map needs |y| < 1/r")
    local = np.concatenate([r * y, np.sqrt(1.0 - ry2)[..., None]], axis=-1)
    return local @ cap.frame.T


def psi_map(cap: CapSpec, p) -> np.ndarray:
    """Inverse chart Psi_z: sphere point (hemisphere of z) -> y = L_z^{-1} proj(p) / r."""
    p = np.asarray(p, dtype=float)
    local = p @ cap.frame
    if np.any(local[..., -1] < 0.0):
        raise DomainError("point outside the hemisphere of the cap center")
    return local[..., :-1] / cap.radius


def pullback(cap: CapSpec, f):
    """r^{d/2} (f o Phi_C) sampled at the chart images of f's nodes.

    Returns FlatSamples whose weights are the Lebesgue weights dy induced
    by f's sigma weights (dsigma = r^d dy / sqrt(1 - r^2|y|^2)).
    """
    from .quadrature import FlatGrid, FlatSamples

    grid = f.grid
    r, d = cap.radius, cap.d
    local = grid.points @ cap.frame
    upper = local[:, -1] > 0.0
    if np.any(~upper & (np.abs(f.values) > 0)):
        raise DomainError("density is not supported in the hemisphere of the cap")
    if grid.is_chart_of(cap):
        return FlatSamples(grid.chart, r ** (d / 2) * np.asarray(f.values, dtype=complex))
    y = local[upper, :-1] / r
    jac = np.sqrt(np.maximum(1.0 - r * r * np.sum(y * y, axis=1), 0.0))
    w = grid.sigma_weights[upper] * jac / r ** d
    flat = FlatGrid(d=d, nodes=y, weights=w, layout="scattered", axes=())
    return FlatSamples(flat, r ** (d / 2) * np.asarray(f.values, dtype=complex)[upper])


# ----------------------------------------------------------------------------
# Maximal separated nets
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CapNet:
    """Maximal 2^{-k}-separated set of centers; the caps C(z, 2^{-k+1})
    cover the searched region."""

    d: int
    level: int
    centers: np.ndarray
    region: Optional[CapSpec] = None

    @property
    def separation(self) -> float:
        return 2.0 ** (-self.level)

    def caps(self) -> list[CapSpec]:
        rad = min(2.0 * self.separation, 1.0)
        return [CapSpec(c, rad) for c in self.centers]

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "level": self.level,
            "separation": self.separation,
            "centers": [[float(f"{x:.15g}") for x in c] for c in self.centers],
        }


def fibonacci_sphere(n: int, offset: float = 0.5) -> np.ndarray:
    i = np.arange(n, dtype=float)
    zc = 1.0 - 2.0 * (i + offset) / n
    golden = math.pi * (3.0 - math.sqrt(5.0))
    ang = golden * i
    rho = np.sqrt(np.maximum(1.0 - zc * zc, 0.0))
    return np.column_stack([rho * np.cos(ang), rho * np.sin(ang), zc])


def circle_points(n: int, offset: float = 0.0) -> np.ndarray:
    ang = 2.0 * math.pi * (np.arange(n) + offset) / n
    return np.column_stack([np.sin(ang), np.cos(ang)])


def _candidates(d: int, spacing: float, offset: float) -> np.ndarray:
    if d == 1:
        return circle_points(int(math.ceil(2.0 * math.pi / spacing)), offset)
    if d == 2:
        return fibonacci_sphere(int(math.ceil(4.0 * math.pi / spacing ** 2)), offset)
    raise DomainError("nets are implemented for d in {1, 2}")


def _in_region(pts: np.ndarray, region: Optional[CapSpec], margin: float) -> np.ndarray:
    if region is None:
        return np.ones(len(pts), dtype=bool)
    ang = np.arccos(np.clip(pts @ region.center, -1.0, 1.0))
    return ang <= region.angular_radius + margin


def build_cap_net(d: int, k: int, region: Optional[CapSpec] = None,
                  candidate_factor: float = 4.0,
                  max_candidates: int = 4_000_000) -> CapNet:
    """Greedy maximal 2^{-k}-separated net over a deterministic candidate
    sequence, followed by an audit pass on a denser sample.

    With ``region`` given, only the part of the sphere within the region's
    angular radius (plus a margin of 2^{-k+1}) is netted.
    """
    if d not in (1, 2):
        raise DomainError("nets are implemented for d in {1, 2}")
    if k < 0:
        raise DomainError("level must be nonnegative")
    s = 2.0 ** (-k)
    spacing = s / candidate_factor
    n_needed = 2 * math.pi / spacing if d == 1 else 4 * math.pi / spacing ** 2
    if n_needed * 4 > max_candidates:
        raise ResolutionError(f"level {k} needs ~{int(n_needed)} candidates; raise max_candidates")
    margin = math.asin(min(2.0 * s, 1.0)) + s
    cand = _candidates(d, spacing, 0.5)
    cand = cand[_in_region(cand, region, margin)]
    centers = _greedy(cand, s)
    audit = _candidates(d, spacing / 2.0, 0.25)
    audit = audit[_in_region(audit, region, margin)]
    centers = _repair(centers, audit, s)
    if d == 1:
        centers = _repair_circle_gaps(centers, s, region, margin)
    dist, _ = cKDTree(centers).query(audit)
    if np.max(dist) > s:
        raise ResolutionError("net audit failed: covering radius exceeds 2^-k")
    return CapNet(d=d, level=k, centers=centers, region=region)


def _greedy(cand: np.ndarray, s: float) -> np.ndarray:
    tree = cKDTree(cand)
    blocked = np.zeros(len(cand), dtype=bool)
    chosen = []
    for i in range(len(cand)):
        if blocked[i]:
            continue
        chosen.append(i)
        blocked[tree.query_ball_point(cand[i], s)] = True
    return cand[chosen]


def _repair(centers: np.ndarray, audit: np.ndarray, s: float) -> np.ndarray:
    dist, _ = cKDTree(centers).query(audit)
    bad = np.flatnonzero(dist > s)
    if bad.size == 0:
        return centers
    added: list[np.ndarray] = []
    for i in bad:
        p = audit[i]
        if added and np.min(np.linalg.norm(np.asarray(added) - p, axis=1)) <= s:
            continue
        added.append(p)
    return np.vstack([centers, np.asarray(added)])


def _repair_circle_gaps(centers, s, region, margin):
    """On S^1 maximality can be certified exactly: insert arc midpoints of
    gaps whose midpoint is farther than s from both neighbours."""
    pts = list(centers)
    for _ in range(8):
        ang = np.sort(np.arctan2(np.asarray(pts)[:, 0], np.asarray(pts)[:, 1]))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * math.pi]]))
        mids = ang + gaps / 2.0
        need = 2.0 * np.sin(gaps / 4.0) > s
        new = np.column_stack([np.sin(mids[need]), np.cos(mids[need])])
        new = new[_in_region(new, region, margin)] if len(new) else new
        if len(new) == 0:
            break
        pts.extend(new)
    return np.asarray(pts)


def overlap_census(net: CapNet, samples: np.ndarray, factor: float = 2.0) -> np.ndarray:
    """Number of caps C(z, factor * 2^{-k}) containing each sample point."""
    rad = factor * net.separation
    if rad >= 1.0:
        return np.sum(samples @ net.centers.T >= 0.0, axis=1)
    chord = 2.0 * math.sin(math.asin(rad) / 2.0)
    tree = cKDTree(net.centers)
    out = np.zeros(len(samples), dtype=int)
    for i, idx in enumerate(tree.query_ball_point(samples, chord * (1 + 1e-9))):
        if not idx:
            continue
        c = net.centers[idx]
        h = c @ samples[i]
        proj = np.sqrt(np.maximum(1.0 - h * h, 0.0))
        out[i] = int(np.sum((h >= 0) & (proj < rad)))
    return out


def packing_bound(d: int) -> int:
    """Level-independent bound on the overlap count of the doubled caps.

    A point lies in C(z, 2s) only if z is within arc length pi*s of it; the
    s/2-balls around s-separated centers are disjoint and fit in a ball of
    radius (pi + 1/2)s, giving at most (2 pi + 1)^d centers.
    """
    return int(math.floor((2.0 * math.pi + 1.0) ** d))


def random_sphere_points(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.normal(size=(n, d + 1))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# ----------------------------------------------------------------------------
# Dyadic cubes and Whitney pairs
# ----------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class DyadicCube:
    """The cube index * 2^{-level} + [0, 2^{-level})^d."""

    level: int
    index: tuple

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.index, dtype=float) * self.side

    def parent(self) -> "DyadicCube":
        return DyadicCube(self.level - 1, tuple(i >> 1 for i in self.index))

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = self.lower
        return np.all((x >= lo) & (x < lo + self.side), axis=-1)

    def to_json(self) -> list:
        return [self.level, list(self.index)]


def adjacent(a: DyadicCube, b: DyadicCube) -> bool:
    """Same-level cubes whose closures touch (a cube is adjacent to itself)."""
    if a.level != b.level:
        raise DomainError("adjacency is defined between cubes of one level")
    return max(abs(i - j) for i, j in zip(a.index, b.index)) <= 1


def related(a: DyadicCube, b: DyadicCube) -> bool:
    """The relation a ~ b: not adjacent, but with adjacent parents."""
    return (not adjacent(a, b)) and adjacent(a.parent(), b.parent())


@dataclass(frozen=True)
class WhitneyPair:
    """A pair of same-level cubes with first ~ second.  ``level`` is the
    generation of the (adjacent) parents; the cubes themselves sit at
    ``level + 1``."""

    first: DyadicCube
    second: DyadicCube
    level: int

    def contains(self, a, b) -> np.ndarray:
        return self.first.contains(a) & self.second.contains(b)

    def to_json(self) -> list:
        return [self.level, self.first.to_json(), self.second.to_json()]


def _index_range(level: int) -> range:
    if level == 0:
        return range(-1, 1)
    half = 2 ** (level - 1)
    return range(-half, half)


def whitney_pairs(d: int, depth: int) -> list[WhitneyPair]:
    """All pairs tau ~ tau' of cubes meeting [-1/2, 1/2)^d, with parent
    generations 0..depth.  Points (a, b) with |a - b|_inf >= 2^{-depth} are
    covered exactly once; the remaining diagonal band is unresolved."""
    if depth < 1:
        raise DomainError("depth must be >= 1")
    pairs: list[WhitneyPair] = []
    offsets = list(product((-1, 0, 1), repeat=d))
    for gen in range(depth + 1):
        lvl = gen + 1
        rng_child = _index_range(lvl)
        lo, hi = rng_child.start, rng_child.stop
        for idx in product(rng_child, repeat=d):
            a = DyadicCube(lvl, idx)
            pa = a.parent().index
            for off in offsets:
                pb = tuple(p + o for p, o in zip(pa, off))
                for kid in product(*[(2 * q, 2 * q + 1) for q in pb]):
                    if any(c < lo or c >= hi for c in kid):
                        continue
                    if max(abs(i - j) for i, j in zip(idx, kid)) >= 2:
                        pairs.append(WhitneyPair(a, DyadicCube(lvl, kid), gen))
    return pairs


def locate_whitney(pairs: Iterable[WhitneyPair], a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Number of product cells tau x tau' containing each sample (a_i, b_i)."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    keyset = {(p.first.level, p.first.index, p.second.index) for p in pairs}
    levels = sorted({k[0] for k in keyset})
    counts = np.zeros(len(a), dtype=int)
    for lvl in levels:
        ia = np.floor(a * 2 ** lvl).astype(int)
        ib = np.floor(b * 2 ** lvl).astype(int)
        for i in range(len(a)):
            if (lvl, tuple(ia[i]), tuple(ib[i])) in keyset:
                counts[i] += 1
    return counts


def unresolved_mask(a: np.ndarray, b: np.ndarray, depth: int) -> np.ndarray:
    """Samples inside the diagonal band |a - b|_inf < 2^{-depth}."""
    return np.max(np.abs(np.atleast_2d(a) - np.atleast_2d(b)), axis=1) < 2.0 ** (-depth)


def net_certificate(net: CapNet, n_samples: int = 10_000, seed: int = 0) -> dict:
    """Separation, covering and overlap checks of a full-sphere net against
    seeded random samples."""
    s = net.separation
    c = net.centers
    if len(c) > 1:
        dist, _ = cKDTree(c).query(c, k=2)
        min_sep = float(np.min(dist[:, 1]))
    else:
        min_sep = math.inf
    pts = random_sphere_points(net.d, n_samples, np.random.default_rng(seed))
    if net.region is not None:
        pts = pts[cap_contains(net.region, pts)]
    cover = float(np.max(cKDTree(c).query(pts)[0])) if len(pts) else 0.0
    census = overlap_census(net, pts)
    bound = packing_bound(net.d)
    return {"level": net.level, "count": int(len(c)), "separation": s,
            "min_separation": min_sep, "covering_radius": cover,
            "max_overlap": int(census.max()) if len(census) else 0, "overlap_bound": bound,
            "separated": min_sep > s * (1 - 1e-12), "covering": cover <= s * (1 + 1e-12),
            "bounded_overlap": bool(len(census) == 0 or census.max() <= bound)}


def whitney_certificate(d: int, depth: int, n_samples: int = 10_000, seed: int = 0,
                        pairs: Optional[list] = None) -> dict:
    """Point location of seeded pairs (a, b) in [-1/2, 1/2)^{2d}: samples off
    the diagonal band lie in exactly one product cell, samples in the band in
    at most one."""
    pairs = whitney_pairs(d, depth) if pairs is None else pairs
    rng = np.random.default_rng(seed)
    a = rng.uniform(-0.5, 0.5, (n_samples, d))
    b = rng.uniform(-0.5, 0.5, (n_samples, d))
    counts = locate_whitney(pairs, a, b)
    band = unresolved_mask(a, b, depth)
    return {"depth": depth, "pairs": len(pairs), "samples": n_samples,
            "resolved": int(np.sum(~band)),
            "covered_once": bool(np.all(counts[~band] == 1)),
            "disjoint": bool(np.all(counts <= 1)),
            "max_count": int(counts.max()) if len(counts) else 0}
