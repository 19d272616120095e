"""Surface grids on Gamma and on caps, flat grids on balls, space-time
lattices and truncated L^p norms with tail corrections.

Gamma is the part of the upper hemisphere with |u| <= 1/2 in the graph
coordinates x = (u, sqrt(1 - |u|^2)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline, RegularGridInterpolator

from .errors import DomainError, ResolutionError
from .geometry import CapSpec, cap_frame, rescaled_map

GAMMA_RADIUS = 0.5


# ----------------------------------------------------------------------------
# Flat grids (functions on balls of R^d)
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FlatGrid:
    """Quadrature nodes and Lebesgue weights on a region of R^d.

    ``layout`` is one of 'gauss', 'uniform' (d = 1), 'polar', 'cartesian'
    (d = 2), or 'scattered'.  ``axes`` holds the 1D coordinate arrays that
    define structured layouts.
    """

    d: int
    nodes: np.ndarray
    weights: np.ndarray
    layout: str
    axes: tuple = ()
    radius: float = 1.0
    tensor_index: Optional[np.ndarray] = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).reshape(-1, self.d)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float).ravel())

    @property
    def size(self) -> int:
        return len(self.weights)

    def interpolant(self, values) -> Callable[[np.ndarray], np.ndarray]:
        """Cubic interpolant of nodal values, zero outside the ball."""
        return _flat_interpolant(self, np.asarray(values, dtype=complex))

    def same_as(self, other: "FlatGrid") -> bool:
        return self is other or (
            self.d == other.d and self.size == other.size
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.weights, other.weights))


@dataclass(frozen=True, eq=False)
class FlatSamples:
    """A function on R^d sampled on a FlatGrid."""

    grid: FlatGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).ravel()
        if v.size != self.grid.size:
            raise DomainError("values do not match the grid")
        object.__setattr__(self, "values", v)

    def l2(self) -> float:
        return float(math.sqrt(np.sum(self.grid.weights * np.abs(self.values) ** 2)))

    def inner(self, other: "FlatSamples") -> complex:
        return complex(np.sum(self.grid.weights * self.values * np.conj(other.values)))

    def __add__(self, other: "FlatSamples") -> "FlatSamples":
        return FlatSamples(self.grid, self.values + other.values)

    def __sub__(self, other: "FlatSamples") -> "FlatSamples":
        return FlatSamples(self.grid, self.values - other.values)

    def scaled(self, c) -> "FlatSamples":
        return FlatSamples(self.grid, c * self.values)


def _gauss(n: int, a: float, b: float):
    g, w = np.polynomial.legendre.leggauss(n)
    return a + (b - a) * (g + 1) / 2, w * (b - a) / 2


def build_ball_grid(d: int, n: int, radius: float = 1.0, layout: Optional[str] = None,
                    n_angle: Optional[int] = None) -> FlatGrid:
    """Quadrature on the ball B(0, radius) of R^d.

    d = 1: 'gauss' (default, n Gauss-Legendre nodes) or 'uniform' (n midpoint
    cells).  d = 2: 'polar' (default; n Gauss-Legendre radii times
    ``n_angle`` = 2n uniform angles) or 'cartesian' (n x n midpoint cells
    masked to the ball).
    """
    if n < 8:
        raise ResolutionError("grid resolution must be at least 8")
    R = float(radius)
    if d == 1:
        layout = layout or "gauss"
        if layout == "gauss":
            y, w = _gauss(n, -R, R)
        elif layout == "uniform":
            h = 2 * R / n
            y = -R + (np.arange(n) + 0.5) * h
            w = np.full(n, h)
        else:
            raise DomainError(f"unknown 1D layout {layout!r}")
        return FlatGrid(1, y[:, None], w, layout, (y,), R)
    if d == 2:
        layout = layout or "polar"
        if layout == "polar":
            m = n_angle or 2 * n
            if m % 2:
                raise DomainError("polar grids need an even number of angles")
            rho, wr = _gauss(n, 0.0, R)
            th = 2 * np.pi * np.arange(m) / m
            P, T = np.meshgrid(rho, th, indexing="ij")
            nodes = np.column_stack([(P * np.cos(T)).ravel(), (P * np.sin(T)).ravel()])
            w = (wr[:, None] * rho[:, None] * np.full(m, 2 * np.pi / m)).ravel()
            return FlatGrid(2, nodes, w, "polar", (rho, th), R)
        if layout == "cartesian":
            h = 2 * R / n
            ax = -R + (np.arange(n) + 0.5) * h
            A, B = np.meshgrid(ax, ax, indexing="ij")
            inside = (A ** 2 + B ** 2 < R * R).ravel()
            nodes = np.column_stack([A.ravel(), B.ravel()])[inside]
            idx = np.flatnonzero(inside)
            return FlatGrid(2, nodes, np.full(len(nodes), h * h), "cartesian", (ax, ax), R, idx)
        raise DomainError(f"unknown 2D layout {layout!r}")
    raise DomainError("ball grids are implemented for d in {1, 2}")


def _flat_interpolant(grid: FlatGrid, values: np.ndarray):
    R = grid.radius
    if grid.layout in ("gauss", "uniform"):
        y = grid.axes[0]
        sre = CubicSpline(y, values.real)
        sim = CubicSpline(y, values.imag)

        def ev1(q):
            q = np.asarray(q, dtype=float)
            q = q[..., 0] if q.ndim and q.shape[-1] == 1 else q
            out = sre(q) + 1j * sim(q)
            return np.where(np.abs(q) < R, out, 0.0)
        return ev1
    if grid.layout == "polar":
        rho, th = grid.axes
        nr, m = len(rho), len(th)
        V = values.reshape(nr, m)
        half = m // 2
        Vflip = np.roll(V, -half, axis=1)[::-1]  # value at (-rho, th) = value at (rho, th + pi)
        rext = np.concatenate([-rho[::-1], rho])
        Vext = np.vstack([Vflip, V])
        pad = 4
        text = np.concatenate([th[-pad:] - 2 * np.pi, th, th[:pad] + 2 * np.pi])
        Vext = np.hstack([Vext[:, -pad:], Vext, Vext[:, :pad]])
        sre = RectBivariateSpline(rext, text, Vext.real)
        sim = RectBivariateSpline(rext, text, Vext.imag)

        def ev2(q):
            q = np.asarray(q, dtype=float)
            shape = q.shape[:-1]
            q = q.reshape(-1, 2)
            r = np.hypot(q[:, 0], q[:, 1])
            t = np.mod(np.arctan2(q[:, 1], q[:, 0]), 2 * np.pi)
            out = sre.ev(r, t) + 1j * sim.ev(r, t)
            return np.where(r < R, out, 0.0).reshape(shape)
        return ev2
    if grid.layout == "cartesian":
        ax = grid.axes[0]
        full = np.zeros(len(ax) ** 2, dtype=complex)
        full[grid.tensor_index] = values
        full = full.reshape(len(ax), len(ax))
        ire = RegularGridInterpolator((ax, ax), full.real, method="cubic",
                                      bounds_error=False, fill_value=0.0)
        iim = RegularGridInterpolator((ax, ax), full.imag, method="cubic",
                                      bounds_error=False, fill_value=0.0)

        def ev3(q):
            q = np.asarray(q, dtype=float)
            shape = q.shape[:-1]
            q = q.reshape(-1, 2)
            out = ire(q) + 1j * iim(q)
            return np.where(np.sum(q * q, 1) < R * R, out, 0.0).reshape(shape)
        return ev3
    raise DomainError(f"no interpolant for layout {grid.layout!r}")


# ----------------------------------------------------------------------------
# Surface grids
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiskGrid:
    """Quadrature on a chart of S^d.

    The chart is y -> frame @ (scale*y, sqrt(1 - scale^2 |y|^2)) on the ball
    B(0, chart.radius).  For Gamma the frame is the identity, scale = 1 and
    the radius is 1/2, so ``nodes`` are the graph coordinates u and
    ``weights`` are du.  ``sigma_weights`` are always the dsigma weights.
    Union grids (several charts glued) have ``chart`` set to None.
    """

    d: int
    nodes: np.ndarray
    weights: np.ndarray
    sigma_weights: np.ndarray
    points: np.ndarray
    frame: Optional[np.ndarray] = None
    scale: float = 1.0
    chart: Optional[FlatGrid] = None
    layout: str = "chart"
    parts: tuple = ()

    @property
    def size(self) -> int:
        return len(self.sigma_weights)

    @property
    def center(self) -> Optional[np.ndarray]:
        return None if self.frame is None else self.frame[:, -1]

    def support_cone(self) -> tuple[np.ndarray, float]:
        """A center direction and angular radius containing all charts."""
        if self.chart is not None:
            R = self.chart.radius * self.scale
            return self.center, math.asin(min(R, 1.0))
        cones = [g.support_cone() for g in self.parts]
        c = np.sum([cz for cz, _ in cones], axis=0)
        c /= np.linalg.norm(c)
        ang = max(math.acos(min(1.0, float(np.dot(c, cz)))) + a for cz, a in cones)
        return c, ang

    def is_chart_of(self, cap: CapSpec) -> bool:
        return (self.chart is not None and abs(self.scale - cap.radius) < 1e-15
                and np.allclose(self.frame, cap.frame, atol=1e-15, rtol=0))

    def chart_coords(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Chart coordinates of sphere points and a mask of valid points."""
        local = np.asarray(pts, dtype=float) @ self.frame
        y = local[..., :-1] / self.scale
        ok = (local[..., -1] > 0) & (np.sum(y * y, -1) < self.chart.radius ** 2)
        return y, ok

    def interpolant(self, values) -> Callable[[np.ndarray], np.ndarray]:
        """Function on the sphere extending nodal values (zero off the chart)."""
        values = np.asarray(values, dtype=complex)
        if self.chart is None:
            if not self.parts:
                raise DomainError("this grid has no chart to interpolate on")
            fns, start = [], 0
            for g in self.parts:
                fns.append(g.interpolant(values[start:start + g.size]))
                start += g.size

            def evu(pts):
                return sum(fn(pts) for fn in fns)
            return evu
        inner = self.chart.interpolant(values)

        def ev(pts):
            y, ok = self.chart_coords(pts)
            out = np.zeros(ok.shape, dtype=complex)
            if np.any(ok):
                out[ok] = inner(y[ok])
            return out
        return ev


def _chart_grid(chart: FlatGrid, frame: np.ndarray, scale: float) -> DiskGrid:
    y = chart.nodes
    ry2 = scale * scale * np.sum(y * y, axis=1)
    if np.any(ry2 >= 1.0):
        raise DomainError("chart leaves the hemisphere")
    jac = np.sqrt(1.0 - ry2)
    local = np.column_stack([scale * y, jac])
    pts = local @ frame.T
    sig = scale ** chart.d * chart.weights / jac
    return DiskGrid(chart.d, y, chart.weights, sig, pts, frame, scale, chart, chart.layout)


def build_disk_grid(d: int, n: int, layout: Optional[str] = None,
                    n_angle: Optional[int] = None) -> DiskGrid:
    """Grid on Gamma = {|u| <= 1/2}.  d = 1 defaults to Gauss-Legendre
    ('uniform' gives the midpoint rule); d = 2 uses a polar grid."""
    chart = build_ball_grid(d, n, GAMMA_RADIUS, layout, n_angle)
    return _chart_grid(chart, np.eye(d + 1), 1.0)


def build_cap_grid(cap: CapSpec, n: int, layout: Optional[str] = None,
                   n_angle: Optional[int] = None) -> DiskGrid:
    """Grid on C(z, r) as the image of B(0, 1) under the rescaled map."""
    chart = build_ball_grid(cap.d, n, 1.0, layout, n_angle)
    return _chart_grid(chart, cap.frame, cap.radius)


def cap_grid_from_chart(cap: CapSpec, chart: FlatGrid) -> DiskGrid:
    if chart.radius > 1.0:
        raise DomainError("cap charts live on B(0, 1)")
    return _chart_grid(chart, cap.frame, cap.radius)


def build_sphere_grid(d: int, n: int) -> DiskGrid:
    """Grid on all of S^d (validation only; no chart)."""
    if d == 1:
        ang = 2 * np.pi * (np.arange(n) + 0.5) / n
        pts = np.column_stack([np.sin(ang), np.cos(ang)])
        w = np.full(n, 2 * np.pi / n)
    elif d == 2:
        c, wc = np.polynomial.legendre.leggauss(n)
        m = 2 * n
        ph = 2 * np.pi * np.arange(m) / m
        C, P = np.meshgrid(c, ph, indexing="ij")
        s = np.sqrt(1 - C ** 2)
        pts = np.column_stack([(s * np.cos(P)).ravel(), (s * np.sin(P)).ravel(), C.ravel()])
        w = (wc[:, None] * np.full(m, 2 * np.pi / m)).ravel()
    else:
        raise DomainError("sphere grids are implemented for d in {1, 2}")
    return DiskGrid(d, pts[:, :d], w, w, pts, None, 1.0, None, "sphere")


def quadrature_reach(grid: DiskGrid, budget: float = 1.0) -> tuple[float, float]:
    """(X_max, T_max) up to which the surface quadrature resolves the phases
    exp(i x.xi) and exp(i t xi_{d+1}).

    A rule with n_eff effective nodes across the chart diameter 2R resolves
    about n_eff radians of phase across the chart; the phase rate per unit
    chart coordinate is scale * |x| in space and |grad_y xi_{d+1}| * |t| in
    time.  Full-sphere grids report no limit.
    """
    if grid.chart is None:
        if not grid.parts:
            return math.inf, math.inf
        reach = [quadrature_reach(g, budget) for g in grid.parts]
        return min(r[0] for r in reach), min(r[1] for r in reach)
    chart = grid.chart
    n_ax = len(chart.axes[0]) if chart.axes else int(round(chart.size ** (1 / chart.d)))
    if chart.layout == "gauss":
        n_eff = n_ax
    elif chart.layout in ("uniform", "cartesian"):
        n_eff = 0.5 * math.pi * n_ax
    elif chart.layout == "polar":
        n_eff = min(2.0 * n_ax, 4.0 / math.e * len(chart.axes[1]))
    else:
        n_eff = chart.size ** (1 / chart.d)
    diam = 2.0 * chart.radius
    s = grid.scale
    y = chart.nodes
    F = grid.frame
    root = np.sqrt(1.0 - s * s * np.sum(y * y, 1))
    grad = s * F[-1, :-1][None, :] - F[-1, -1] * (s * s) * y / root[:, None]
    slope = float(np.max(np.linalg.norm(grad, axis=1)))
    X = budget * n_eff / (s * diam)
    T = math.inf if slope == 0 else budget * n_eff / (slope * diam)
    return X, T


def union_grid(grids: list[DiskGrid]) -> DiskGrid:
    """Concatenate grids with disjoint supports into one quadrature."""
    if len(grids) == 1:
        return grids[0]
    d = grids[0].d
    return DiskGrid(
        d,
        np.vstack([g.nodes for g in grids]),
        np.concatenate([g.weights for g in grids]),
        np.concatenate([g.sigma_weights for g in grids]),
        np.vstack([g.points for g in grids]),
        None, 1.0, None, "union", tuple(grids))


def gamma_mask(points: np.ndarray) -> np.ndarray:
    """Points of the closed region Gamma."""
    d = points.shape[1] - 1
    return (points[:, d] > 0) & (np.sum(points[:, :d] ** 2, 1) <= GAMMA_RADIUS ** 2 + 1e-15)


@dataclass(frozen=True, eq=False)
class SurfaceDensity:
    """Complex density sampled at the nodes of a DiskGrid."""

    grid: DiskGrid
    values: np.ndarray
    convention: object = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).ravel()
        if v.size != self.grid.size:
            raise DomainError("values do not match the grid")
        if not np.all(np.isfinite(v)):
            raise DomainError("density values must be finite")
        object.__setattr__(self, "values", v)

    def with_values(self, v) -> "SurfaceDensity":
        return SurfaceDensity(self.grid, v, self.convention)

    def __add__(self, other):
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        return self.with_values(self.values - other.values)

    def scaled(self, c) -> "SurfaceDensity":
        return self.with_values(c * self.values)

    def normalized(self) -> "SurfaceDensity":
        n = l2_sigma_norm(self)
        if n == 0:
            raise DomainError("cannot normalize the zero density")
        return self.scaled(1.0 / n)

    def interpolant(self):
        return self.grid.interpolant(self.values)


def density_from_function(grid: DiskGrid, fn: Callable[[np.ndarray], np.ndarray],
                          convention=None) -> SurfaceDensity:
    """Sample a function of sphere points on a grid."""
    return SurfaceDensity(grid, fn(grid.points), convention)


def random_density(grid: DiskGrid, rng: np.random.Generator, bumps: int = 3,
                   widths=(0.08, 0.2)) -> SurfaceDensity:
    """Sum of complex Gaussians in the graph coordinates u, with centres in
    [-1/4, 1/4]^d, times a smooth cutoff vanishing at |u| = 1/2."""
    d = grid.d
    cs = rng.uniform(-0.25, 0.25, (bumps, d))
    ss = rng.uniform(widths[0], widths[1], bumps)
    aa = rng.normal(size=bumps) + 1j * rng.normal(size=bumps)
    u = grid.points[:, :d]
    s = np.sum(u * u, 1) / GAMMA_RADIUS ** 2
    cut = np.zeros_like(s)
    inside = s < 1
    cut[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    v = sum(a * np.exp(-np.sum((u - c) ** 2, 1) / (2 * w * w)) for a, c, w in zip(aa, cs, ss))
    return SurfaceDensity(grid, v * cut)


def l2_sigma_norm(f: SurfaceDensity) -> float:
    return float(math.sqrt(np.sum(f.grid.sigma_weights * np.abs(f.values) ** 2)))


def l1_sigma_norm(f: SurfaceDensity) -> float:
    return float(np.sum(f.grid.sigma_weights * np.abs(f.values)))


# ----------------------------------------------------------------------------
# Space-time lattices and L^p norms
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Cell-centred uniform lattice on [-T, T] x [-X, X]^d.

    ``t0`` and ``x0`` shift the box centre."""

    d: int
    T: float
    X: float
    nt: int
    nx: int
    t0: float = 0.0
    x0: tuple = ()

    def __post_init__(self):
        if self.nt < 1 or self.nx < 1 or self.T <= 0 or self.X <= 0:
            raise DomainError("space-time grid needs positive extents and sizes")
        if not self.x0:
            object.__setattr__(self, "x0", (0.0,) * self.d)

    @property
    def ht(self) -> float:
        return 2.0 * self.T / self.nt

    @property
    def hx(self) -> float:
        return 2.0 * self.X / self.nx

    @property
    def cell_weight(self) -> float:
        return self.ht * self.hx ** self.d

    @property
    def ts(self) -> np.ndarray:
        return self.t0 - self.T + (np.arange(self.nt) + 0.5) * self.ht

    @property
    def x_axis(self) -> np.ndarray:
        return -self.X + (np.arange(self.nx) + 0.5) * self.hx

    @property
    def xs(self) -> np.ndarray:
        """Spatial lattice points, shape (nx^d, d), C order."""
        ax = self.x_axis
        mesh = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh]) + np.asarray(self.x0)

    def edge_mask(self) -> np.ndarray:
        idx = np.meshgrid(*([np.arange(self.nx)] * self.d), indexing="ij")
        e = np.zeros(idx[0].shape, dtype=bool)
        for i in idx:
            e |= (i == 0) | (i == self.nx - 1)
        return e.ravel()

    @classmethod
    def from_spacing(cls, d: int, T: float, X: float, ht: float, hx: float, **kw) -> "SpaceTimeGrid":
        nt = max(1, int(round(2 * T / ht)))
        nx = max(1, int(round(2 * X / hx)))
        return cls(d, nt * ht / 2, nx * hx / 2, nt, nx, **kw)

    def to_json(self) -> dict:
        return {"d": self.d, "T": self.T, "X": self.X, "nt": self.nt, "nx": self.nx,
                "t0": self.t0, "x0": list(self.x0)}


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Complex samples on a SpaceTimeGrid, shape (nt, nx^d).

    ``envelope(p)`` (optional) returns (a, C) with
    int |F(t, x)|^p dx ~ C |t|^{-a} for large |t|, which anchors the tail.
    """

    grid: SpaceTimeGrid
    values: np.ndarray
    envelope: Optional[Callable[[float], tuple[float, float]]] = None
    decay: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.grid.nt, self.grid.nx ** self.grid.d):
            raise DomainError("field values do not match the lattice")

    def slices(self, p: float) -> np.ndarray:
        """Spatial integrals S(t) = sum_x |F|^p hx^d."""
        return np.sum(np.abs(self.values) ** p, axis=1) * self.grid.hx ** self.grid.d

    @property
    def tail_estimate(self) -> float:
        return lp_norm(self, self.decay_p).tail if self.envelope else 0.0

    @property
    def decay_p(self) -> float:
        return 2.0 + 4.0 / self.grid.d


@dataclass(frozen=True)
class NormEstimate:
    """An L^p norm with its truncated part, tail and uncertainty (norm units)."""

    value: float
    truncated: float
    tail: float
    uncertainty: float
    p: float
    resolution: dict = field(default_factory=dict)

    def scaled(self, c: float) -> "NormEstimate":
        c = abs(c)
        return NormEstimate(c * self.value, c * self.truncated, c ** self.p * self.tail,
                            c * self.uncertainty, self.p, self.resolution)

    def to_json(self) -> dict:
        return {"value": self.value, "truncated": self.truncated, "tail": self.tail,
                "uncertainty": self.uncertainty, "p": self.p, "resolution": self.resolution}


def _side_tail(ts: np.ndarray, S: np.ndarray, T_edge: float, a: float,
               C: Optional[float], window: float = 0.5) -> tuple[float, float]:
    """Tail integral beyond T_edge on one side and a spread-based error.

    Model: S(t) t^a = C - b1/t - b2/t^2 on |t| in [window*T, T].  With C
    known, the error is the spread of the one- and two-term fits and the
    bare C |t|^{-a} tail, which brackets slices still approaching their
    asymptote."""
    tt = np.abs(ts)
    Tm = tt.max() if tt.size else 0.0
    m = tt >= window * Tm
    tt, SS = tt[m], S[m]
    if tt.size == 0:
        return 0.0, 0.0
    y = SS * tt ** a
    lead = lambda c: c * T_edge ** (1 - a) / (a - 1)
    if C is not None:
        r = C - y
        if tt.size < 4:
            return lead(C), lead(C)
        b1 = np.sum(r / tt) / np.sum(tt ** -2.0)
        A = np.column_stack([1 / tt, 1 / tt ** 2])
        c1, c2 = np.linalg.lstsq(A, r, rcond=None)[0]
        one = lead(C) - b1 * T_edge ** (-a) / a
        two = lead(C) - c1 * T_edge ** (-a) / a - c2 * T_edge ** (-a - 1) / (a + 1)
        models = (one, two, lead(C))
        return max(two, 0.0), max(models) - min(models)
    if tt.size < 3:
        c = float(np.mean(y))
        return lead(c), lead(c)
    c0 = float(np.mean(y))
    A = np.column_stack([np.ones_like(tt), 1 / tt])
    cc, b = np.linalg.lstsq(A, y, rcond=None)[0]
    one = lead(c0)
    two = lead(cc) + b * T_edge ** (-a) / a
    return max(two, 0.0), abs(two - one)


def lp_norm(field: SpaceTimeField, p: float, tail: bool = True) -> NormEstimate:
    """Riemann-sum L^p norm over the lattice plus a fitted |t|^{-a} tail.

    The truncated part is monotone under enlargement of the box; the tail is
    anchored on the stationary-phase constant when the field carries one,
    otherwise fitted.  The uncertainty adds the spread of two tail models and
    the mass on the spatial boundary layer.
    """
    if p < 1:
        raise DomainError("p must be >= 1")
    v = np.asarray(field.values)
    if v.size == 0:
        raise DomainError("empty field")
    g = field.grid
    S = field.slices(p)
    trunc = float(np.sum(S) * g.ht)
    edge = float(np.sum(np.abs(v[:, g.edge_mask()]) ** p) * g.cell_weight)
    t_total, t_err = 0.0, 0.0
    if tail and trunc > 0:
        if field.envelope is not None:
            a, C = field.envelope(p)
        else:
            a, C = (field.decay or g.d * p / 2 - g.d), None
        if a > 1:
            ts = g.ts - g.t0
            for sgn in (1.0, -1.0):
                side = sgn * ts > 0
                tv, err = _side_tail(ts[side], S[side], g.T, a, C)
                t_total += tv
                t_err += err
    total = trunc + t_total
    val = total ** (1.0 / p)
    unc_pow = t_err + edge
    unc = val * unc_pow / (p * total) if total > 0 else 0.0
    res = {"T": g.T, "X": g.X, "nt": g.nt, "nx": g.nx}
    return NormEstimate(val, trunc ** (1.0 / p), t_total, unc, p, res)


def suggest_lattice(d: int, p: float, width_x: float, width_t: float,
                    T: float, X: float, safety: float = 0.8) -> SpaceTimeGrid:
    """Lattice whose spacing resolves the band limit of |F|^p for even p.

    If the spectrum of F lies in a box of side ``width_x`` in each space
    direction and ``width_t`` in time, |F|^p has spectrum inside
    [-(p/2) w, (p/2) w] per axis, so the midpoint sum over the infinite
    lattice is exact once h < 4 pi / (p w).
    """
    hx = safety * 4 * math.pi / (p * max(width_x, 1e-12))
    ht = safety * 4 * math.pi / (p * max(width_t, 1e-12))
    ht = min(ht, T / 30)  # enough slices to fit the tail
    hx = min(hx, X / 4)
    return SpaceTimeGrid.from_spacing(d, T, X, ht, hx)


def spectral_widths(points: np.ndarray) -> tuple[float, float]:
    """Side lengths (space, time) of a box containing the given sphere points."""
    d = points.shape[1] - 1
    wx = float(np.max(np.ptp(points[:, :d], axis=0)))
    wt = float(np.ptp(points[:, d]))
    return wx, wt
