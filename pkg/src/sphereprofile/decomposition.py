"""Two-stage profile decomposition: cap pieces by level-set thresholding,
modulation profiles by a correlation-maximization surrogate, synthesis back
to the sphere and orthogonality bookkeeping."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ResolutionError, ValidationError
from .extension import (ConventionTag, ModulationParams, _sphere_envelope, _tag, extend_sphere,
                        paraboloid_constant_bare, sphere_quotient, strichartz_exponent)
from .geometry import CapSpec, cap_contains, north_pole
from .quadrature import (FlatGrid, FlatSamples, NormEstimate, SpaceTimeField, SpaceTimeGrid,
                         SurfaceDensity, build_ball_grid, cap_grid_from_chart, l2_sigma_norm,
                         lp_norm, spectral_widths, suggest_lattice, union_grid)
from .refinement import cap_concentration

C0_DEFAULT = 0.5
ALPHA_DEFAULT = 0.5


# ----------------------------------------------------------------------------
# First stage: cap pieces
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CapPiece:
    """Piece of a density supported on a cap with |piece| <= C |C|^{-1/2}."""

    cap: CapSpec
    density: SurfaceDensity
    bound_constant: float

    def bound_holds(self, rtol: float = 1e-12) -> bool:
        lim = self.bound_constant / math.sqrt(self.cap.measure)
        return bool(np.all(np.abs(self.density.values) <= lim * (1 + rtol)))

    def to_json(self) -> dict:
        return {"cap": self.cap.to_json(), "bound_constant": self.bound_constant,
                "l2": l2_sigma_norm(self.density)}


def threshold_level(cap: CapSpec, delta: float, alpha: float = ALPHA_DEFAULT,
                    c0: float = C0_DEFAULT) -> float:
    """R with R^{-1} = (c0 / 2) delta^{1/alpha} |C|^{1/2}."""
    if not (0.0 < delta < 1.0):
        raise DomainError("delta must lie in (0, 1)")
    if not (0.0 < alpha < 1.0):
        raise DomainError("alpha must lie in (0, 1)")
    if c0 <= 0:
        raise DomainError("c0 must be positive")
    return 2.0 / (c0 * delta ** (1.0 / alpha) * math.sqrt(cap.measure))


def threshold_split(f: SurfaceDensity, cap: CapSpec, delta: float,
                    alpha: float = ALPHA_DEFAULT, c0: float = C0_DEFAULT
                    ) -> tuple[SurfaceDensity, SurfaceDensity]:
    """g = f on {x in C : |f(x)| <= R}, h = f - g (disjoint supports)."""
    R = threshold_level(cap, delta, alpha, c0)
    keep = cap_contains(cap, f.grid.points) & (np.abs(f.values) <= R)
    g = np.where(keep, f.values, 0.0)
    h = np.where(keep, 0.0, f.values)
    return f.with_values(g), f.with_values(h)


@dataclass
class FirstDecomposition:
    pieces: list
    remainder: SurfaceDensity
    remainder_norm: float
    threshold: float
    eta: float
    converged: bool
    history: list = field(default_factory=list)

    def pythagoras_residual(self) -> float:
        tot = math.fsum(l2_sigma_norm(p.density) ** 2 for p in self.pieces)
        tot += l2_sigma_norm(self.remainder) ** 2
        full = self.remainder.with_values(self.remainder.values)
        for p in self.pieces:
            full = full.with_values(full.values + p.density.values)
        return abs(l2_sigma_norm(full) ** 2 - tot)

    def to_json(self) -> dict:
        return {"pieces": [p.to_json() for p in self.pieces],
                "remainder_l2": l2_sigma_norm(self.remainder),
                "remainder_extension_norm": self.remainder_norm,
                "threshold": self.threshold, "eta": self.eta,
                "converged": self.converged, "history": self.history}


def first_decomposition(f: SurfaceDensity, delta: float, max_pieces: int = 10,
                        alpha: float = ALPHA_DEFAULT, c0: float = C0_DEFAULT,
                        R_est: Optional[float] = None, max_level: int = 4,
                        conv: Optional[ConventionTag] = None) -> FirstDecomposition:
    """Peel cap pieces off f until the remainder's extension norm is at most
    delta * R_est.

    R_est defaults to the paraboloid constant in the density's convention
    (a lower bound for the sphere constant).  The loop also stops when the
    best cap yields an empty piece; the result is then flagged as not
    converged.
    """
    if not (0.0 < delta < 1.0):
        raise DomainError("delta must lie in (0, 1)")
    n = l2_sigma_norm(f)
    if abs(n - 1.0) > 1e-9:
        raise ValidationError("first_decomposition expects ||f|| = 1")
    d = f.grid.d
    tag = _tag(conv, f, d)
    if R_est is None:
        R_est = tag.prefactor * paraboloid_constant_bare(d)
    target = delta * R_est
    pieces, history = [], []
    rem = f
    converged = False
    for _ in range(max_pieces + 1):
        rn = l2_sigma_norm(rem)
        ext = 0.0 if rn == 0 else sphere_quotient(rem, tag).value * rn
        history.append({"remainder_l2": rn, "remainder_extension_norm": ext})
        if ext <= target:
            converged = True
            break
        if len(pieces) == max_pieces:
            break
        best = cap_concentration(rem, max_level).best_cap
        if best is None:
            break
        g, h = threshold_split(rem, best, delta, alpha, c0)
        if not np.any(g.values):
            break
        R = threshold_level(best, delta, alpha, c0)
        pieces.append(CapPiece(best, g, R * math.sqrt(best.measure)))
        rem = h
    eta = min((l2_sigma_norm(p.density) for p in pieces), default=0.0)
    return FirstDecomposition(pieces, rem, history[-1]["remainder_extension_norm"],
                              target, eta, converged, history)


# ----------------------------------------------------------------------------
# Second stage: modulation profiles
# ----------------------------------------------------------------------------


def modulate(g: FlatSamples, m: ModulationParams, direction: str = "forward") -> FlatSamples:
    """T g = exp(-i t|y|^2/2) exp(i x.y) g, or its inverse."""
    ph = m.phase(g.grid.nodes)
    if direction == "forward":
        return FlatSamples(g.grid, ph * g.values)
    if direction == "inverse":
        return FlatSamples(g.grid, np.conj(ph) * g.values)
    raise DomainError("direction must be 'forward' or 'inverse'")


def cubic_bspline(u: np.ndarray) -> np.ndarray:
    """Centred cardinal cubic B-spline supported on [-2, 2]."""
    a = np.abs(np.asarray(u, dtype=float))
    out = np.where(a < 1, 2 / 3 - a * a + a ** 3 / 2, 0.0)
    return np.where((a >= 1) & (a < 2), (2 - a) ** 3 / 6, out)


@dataclass(frozen=True)
class ProbeBump:
    center: tuple
    scale: float

    def __call__(self, y: np.ndarray) -> np.ndarray:
        u = 2.0 * (np.asarray(y) - np.asarray(self.center)) / self.scale
        return np.prod(cubic_bspline(u), axis=1)

    def window(self, y: np.ndarray) -> np.ndarray:
        return np.all(np.abs(np.asarray(y) - np.asarray(self.center)) < self.scale, axis=1)

    def to_json(self) -> dict:
        return {"center": list(self.center), "scale": self.scale}


def probe_bumps(d: int, scales: Sequence[float] = (1.0, 0.5, 0.25)) -> list[ProbeBump]:
    """Tensor cubic B-spline bumps centred on s Z^d inside B(0, 1)."""
    out = []
    for s in scales:
        m = int(math.floor(1.0 / s))
        ax = np.arange(-m, m + 1) * s
        mesh = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), -1).reshape(-1, d)
        for c in mesh:
            if np.dot(c, c) < 1.0 - 1e-12:
                out.append(ProbeBump(tuple(float(v) for v in c), float(s)))
    return out


@dataclass(frozen=True)
class SearchLattice:
    """Modulation parameters x in x_axis^d, t in t_axis."""

    x_axis: np.ndarray
    t_axis: np.ndarray

    def __post_init__(self):
        for name in ("x_axis", "t_axis"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim != 1 or a.size == 0 or np.any(np.diff(a) <= 0):
                raise DomainError(f"{name} must be a nonempty increasing 1D array")
            object.__setattr__(self, name, a)

    @classmethod
    def uniform(cls, x_max: float, hx: float, t_min: float, t_max: float, ht: float):
        nx = int(round(x_max / hx))
        nt = int(round((t_max - t_min) / ht))
        return cls(np.arange(-nx, nx + 1) * hx, t_min + np.arange(nt + 1) * ht)

    @property
    def hx(self) -> float:
        return float(np.min(np.diff(self.x_axis))) if self.x_axis.size > 1 else math.inf

    @property
    def ht(self) -> float:
        return float(np.min(np.diff(self.t_axis))) if self.t_axis.size > 1 else math.inf

    def params(self, ix: tuple, it: int) -> ModulationParams:
        return ModulationParams(tuple(self.x_axis[i] for i in ix), self.t_axis[it])

    def on_boundary(self, ix: tuple, it: int) -> bool:
        nx = self.x_axis.size
        return any(i in (0, nx - 1) for i in ix) or (self.t_axis.size > 1 and it in (0, self.t_axis.size - 1))

    def to_json(self) -> dict:
        return {"x_axis": self.x_axis.tolist(), "t_axis": self.t_axis.tolist()}


def _correlations(g: FlatSamples, chi: np.ndarray, lat: SearchLattice) -> np.ndarray:
    """|<T_(x,t) g, chi>| for all lattice points, shape (nt, nx, ..., nx)."""
    grid = g.grid
    y = grid.nodes
    d = grid.d
    q = np.sum(y * y, 1)
    base = grid.weights * g.values * np.conj(chi)
    xa = lat.x_axis
    nx = xa.size
    out = np.empty((lat.t_axis.size,) + (nx,) * d)
    separable = d == 2 and grid.layout == "cartesian" and grid.tensor_index is not None
    if separable:
        ax = grid.axes[0]
        E = np.exp(1j * np.outer(xa, ax))
        n = ax.size
    for k, t in enumerate(lat.t_axis):
        a = base * np.exp(-0.5j * t * q)
        if d == 1:
            out[k] = np.abs(np.exp(1j * np.outer(xa, y[:, 0])) @ a)
        elif separable:
            A = np.zeros(n * n, dtype=complex)
            A[grid.tensor_index] = a
            out[k] = np.abs(E @ A.reshape(n, n) @ E.T)
        else:
            X = np.stack(np.meshgrid(*([xa] * d), indexing="ij"), -1).reshape(-1, d)
            out[k] = np.abs(np.exp(1j * X @ y.T) @ a).reshape((nx,) * d)
    return out


@dataclass
class Profile:
    """A profile phi on B(0, 1) with per-index cap and modulation parameters."""

    phi: FlatSamples
    cap: CapSpec
    modulation: ModulationParams
    trajectory: dict = field(default_factory=dict)
    caps: dict = field(default_factory=dict)

    def params_at(self, nu) -> ModulationParams:
        return self.trajectory.get(nu, self.modulation)

    def cap_at(self, nu) -> CapSpec:
        return self.caps.get(nu, self.cap)

    def to_json(self) -> dict:
        return {"cap": self.cap.to_json(), "modulation": self.modulation.to_json(),
                "l2": self.phi.l2(),
                "trajectory": {str(k): v.to_json() for k, v in self.trajectory.items()}}


@dataclass
class ExtractionResult:
    profiles: list
    errors: list
    scores: list
    flags: list
    bumps: list

    def to_json(self) -> dict:
        return {"profiles": [p.to_json() for p in self.profiles],
                "error_l2": [e.l2() for e in self.errors],
                "scores": self.scores, "flags": self.flags,
                "bumps": [b.to_json() for b in self.bumps]}


def extract_profiles(sequence: Sequence[FlatSamples], eps: float, max_profiles: int,
                     lattice: SearchLattice, nus: Optional[Sequence] = None,
                     cap: Optional[CapSpec] = None, scales=(1.0, 0.5, 0.25),
                     merge_cells: float = 2.0) -> ExtractionResult:
    """Finite surrogate of weak-limit profile extraction.

    Each round scores every test bump chi by the mean over the second half
    of the sequence of max_(x,t) |<T_(x,t) g_nu, chi>|.  The best bump fixes
    the per-index parameters (the argmax), the profile is the mean of the
    aligned tail restricted to the bump's support cube, and T^{-1} phi is
    subtracted from every g_nu.  Profiles whose parameters stay within
    ``merge_cells`` lattice cells of an earlier profile for every index are
    merged into it.  Hits on the lattice boundary are flagged.
    """
    if len(sequence) == 0:
        raise ValidationError("empty sequence")
    grid = sequence[0].grid
    for g in sequence:
        if not g.grid.same_as(grid):
            raise ValidationError("sequence elements must share a grid")
    nus = list(range(len(sequence))) if nus is None else list(nus)
    if len(nus) != len(sequence):
        raise ValidationError("nus and sequence lengths differ")
    cap = cap or CapSpec(north_pole(grid.d), 0.25)
    d = grid.d
    y = grid.nodes
    bumps = probe_bumps(d, scales)
    chis = []
    for b in bumps:
        c = b(y)
        nc = math.sqrt(float(np.sum(grid.weights * c * c)))
        chis.append(c / nc if nc > 0 else c)
    tail = list(range(len(sequence) // 2, len(sequence)))
    errs = [FlatSamples(g.grid, g.values.copy()) for g in sequence]
    profiles, scores, flags = [], [], []
    used_bumps = []
    for _ in range(max_profiles):
        best = (-1.0, None, None)
        for bi, chi in enumerate(chis):
            locs, vals = [], []
            for k in range(len(errs)):
                C = _correlations(errs[k], chi, lat=lattice)
                j = int(np.argmax(C))
                vals.append(float(C.flat[j]))
                locs.append(np.unravel_index(j, C.shape))
            score = float(np.mean([vals[k] for k in tail]))
            if score > best[0]:
                best = (score, bi, locs)
        score, bi, locs = best
        scores.append(score)
        if score < eps:
            break
        params = [lattice.params(tuple(int(i) for i in loc[1:]), int(loc[0])) for loc in locs]
        for k, loc in enumerate(locs):
            if lattice.on_boundary(tuple(int(i) for i in loc[1:]), int(loc[0])):
                flags.append({"round": len(used_bumps), "nu": nus[k],
                              "issue": "argmax on lattice boundary"})
        win = bumps[bi].window(y)
        aligned = np.mean([modulate(errs[k], params[k]).values for k in tail], axis=0)
        phi = FlatSamples(grid, np.where(win, aligned, 0.0))
        used_bumps.append(bumps[bi])
        for k in range(len(errs)):
            errs[k] = errs[k] - modulate(phi, params[k], "inverse")
        traj = dict(zip(nus, params))
        merged = False
        for p in profiles:
            close = all(
                max(np.max(np.abs(np.subtract(p.trajectory[nu].x, traj[nu].x))) / lattice.hx,
                    abs(p.trajectory[nu].t - traj[nu].t) / lattice.ht) <= merge_cells
                for nu in nus)
            if close:
                p.phi = p.phi + phi
                merged = True
                break
        if not merged:
            profiles.append(Profile(phi, cap, params[-1], traj))
    return ExtractionResult(profiles, errs, scores, flags, used_bumps)


# ----------------------------------------------------------------------------
# Synthesis and planted sequences
# ----------------------------------------------------------------------------


def _same_cap(a: CapSpec, b: CapSpec) -> bool:
    return a.radius == b.radius and np.array_equal(a.center, b.center)


def supports_overlap(caps: Sequence[CapSpec]) -> bool:
    """True when two distinct caps intersect."""
    uniq = []
    for c in caps:
        if not any(_same_cap(c, u) for u in uniq):
            uniq.append(c)
    for i in range(len(uniq)):
        for j in range(i):
            a, b = uniq[i], uniq[j]
            ang = math.acos(max(-1.0, min(1.0, float(np.dot(a.center, b.center)))))
            if ang < a.angular_radius + b.angular_radius:
                return True
    return False


def profile_density(profile: Profile, nu, conv=None) -> SurfaceDensity:
    """[(1 - |.|^2)^{1/4} r^{-d/2} (T^{-1} phi)(./r)] o L_z o Pi_z on the cap."""
    cap = profile.cap_at(nu)
    if cap.radius > 0.5:
        raise DomainError("profile caps need r <= 1/2")
    g = modulate(profile.phi, profile.params_at(nu), "inverse")
    grid = cap_grid_from_chart(cap, g.grid)
    r, d = cap.radius, cap.d
    jac = (1.0 - r * r * np.sum(g.grid.nodes ** 2, 1)) ** 0.25
    return SurfaceDensity(grid, jac * r ** (-d / 2) * g.values, conv)


def synthesize(profiles: Sequence[Profile], nu, conv=None, d: Optional[int] = None) -> SurfaceDensity:
    """Sum of the profiles' sphere densities at index nu.

    Profiles on the same cap share its chart grid; distinct caps are joined
    in a union grid.  Intersecting distinct caps trigger a warning since the
    L^2 bookkeeping presumes disjoint supports.
    """
    if not profiles:
        d = 1 if d is None else d
        grid = cap_grid_from_chart(CapSpec(north_pole(d), 0.25), build_ball_grid(d, 8))
        return SurfaceDensity(grid, np.zeros(grid.size), conv)
    groups: list[tuple[CapSpec, SurfaceDensity]] = []
    for p in profiles:
        dens = profile_density(p, nu, conv)
        for i, (c, s) in enumerate(groups):
            if _same_cap(c, p.cap_at(nu)) and s.grid.chart.same_as(dens.grid.chart):
                groups[i] = (c, s.with_values(s.values + dens.values))
                break
        else:
            groups.append((p.cap_at(nu), dens))
    if supports_overlap([c for c, _ in groups]):
        warnings.warn("synthesized profiles have intersecting cap supports", RuntimeWarning)
    if len(groups) == 1:
        return groups[0][1]
    grid = union_grid([s.grid for _, s in groups])
    return SurfaceDensity(grid, np.concatenate([s.values for _, s in groups]), conv)


def bump_profile(grid: FlatGrid, center, width: float, radius: float,
                 amplitude: float = 1.0, phase: float = 0.0) -> FlatSamples:
    """amplitude * Gaussian(width) * smooth cutoff of the given radius, centred
    at ``center``; supported in the closed ball B(center, radius)."""
    y = grid.nodes - np.asarray(center, dtype=float)
    s = np.sum(y * y, 1) / radius ** 2
    inside = s < 1
    cut = np.zeros_like(s)
    cut[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    g = np.exp(-np.sum(y * y, 1) / (2 * width ** 2))
    return FlatSamples(grid, amplitude * np.exp(1j * phase) * g * cut)


@dataclass(frozen=True)
class PlantedProfileSpec:
    center: tuple
    width: float = 0.12
    radius: float = 0.4
    amplitude: float = 1.0
    x0: tuple = ()
    vx: tuple = ()
    t0: float = 0.0
    vt: float = 0.0

    def params(self, nu: float, d: int) -> ModulationParams:
        x0 = np.zeros(d) if not self.x0 else np.asarray(self.x0, dtype=float)
        vx = np.zeros(d) if not self.vx else np.asarray(self.vx, dtype=float)
        return ModulationParams(tuple(x0 + nu * vx), self.t0 + nu * self.vt)


@dataclass(frozen=True)
class PlantConfig:
    d: int = 2
    profiles: tuple = ()
    nus: tuple = (2, 4, 6, 8)
    n: int = 60
    cap_radius: float = 0.25
    noise: float = 0.0
    seed: int = 0

    def to_json(self) -> dict:
        return {"d": self.d, "nus": list(self.nus), "n": self.n, "cap_radius": self.cap_radius,
                "noise": self.noise, "seed": self.seed,
                "profiles": [vars(p) for p in self.profiles]}


def default_plant_config(d: int = 2, k: float = 3.0, nus=(2, 4, 6, 8), count: int = 2,
                         **kw) -> PlantConfig:
    """``count`` velocity-disjoint profiles on skew trajectories.

    In d = 2 profile j sits at angle theta_j = pi/2 + 2 pi j / count on the
    circle |y| = 1/2, moves along (sin theta_j, -cos theta_j) with speed k and
    has t = j nu; for two profiles this is (k nu e1, 0) and (-k nu e1, nu).
    In d = 1 at most two profiles fit: y = +-1/2.
    """
    if count < 1:
        raise DomainError("need at least one profile")
    if d == 1:
        if count > 2:
            raise DomainError("d = 1 supports at most two planted profiles")
        specs = [PlantedProfileSpec(center=(0.5,), vx=(k,)),
                 PlantedProfileSpec(center=(-0.5,), vx=(-k,), vt=1.0)][:count]
        return PlantConfig(d=d, profiles=tuple(specs), nus=tuple(nus), **kw)
    radius = 0.4 if count < 3 else min(0.4, 0.45 * math.sin(math.pi / count))
    width = min(0.12, 0.3 * radius)
    specs = []
    for j in range(count):
        th = math.pi / 2 + 2 * math.pi * j / count
        c = (round(0.5 * math.cos(th), 15) + 0.0, round(0.5 * math.sin(th), 15) + 0.0)
        w = (round(math.sin(th), 15) + 0.0, round(-math.cos(th), 15) + 0.0)
        specs.append(PlantedProfileSpec(center=c + (0.0,) * (d - 2), width=width, radius=radius,
                                        vx=tuple(k * v for v in w) + (0.0,) * (d - 2),
                                        vt=float(j)))
    return PlantConfig(d=d, profiles=tuple(specs), nus=tuple(nus), **kw)


@dataclass
class PlantedSequence:
    config: PlantConfig
    nus: list
    sequence: list
    profiles: list
    cap: CapSpec

    def density(self, nu, conv=None) -> SurfaceDensity:
        return lift_to_cap(self.sequence[self.nus.index(nu)], self.cap, conv)


def lift_to_cap(g: FlatSamples, cap: CapSpec, conv=None) -> SurfaceDensity:
    """f(Phi_C(y)) = r^{-d/2} (1 - r^2 |y|^2)^{1/4} g(y) on the chart of the cap."""
    grid = cap_grid_from_chart(cap, g.grid)
    r, d = cap.radius, cap.d
    jac = (1.0 - r * r * np.sum(g.grid.nodes ** 2, 1)) ** 0.25
    return SurfaceDensity(grid, jac * r ** (-d / 2) * g.values, conv)


def plant_sequence(config: PlantConfig) -> PlantedSequence:
    """g_nu = sum_j T^{-1}_{(x_j(nu), t_j(nu))} phi_j (+ seeded noise) on a
    Cartesian grid of B(0, 1), with the truth as Profile objects."""
    d = config.d
    grid = build_ball_grid(d, config.n, 1.0, "cartesian" if d == 2 else "uniform")
    cap = CapSpec(north_pole(d), config.cap_radius)
    rng = np.random.default_rng(config.seed)
    truth = []
    for spec in config.profiles:
        phi = bump_profile(grid, spec.center, spec.width, spec.radius, spec.amplitude)
        traj = {nu: spec.params(nu, d) for nu in config.nus}
        truth.append(Profile(phi, cap, traj[config.nus[-1]], traj))
    seq = []
    for nu in config.nus:
        v = np.zeros(grid.size, dtype=complex)
        for p in truth:
            v += modulate(p.phi, p.params_at(nu), "inverse").values
        if config.noise > 0:
            v += config.noise * (rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size))
        seq.append(FlatSamples(grid, v))
    return PlantedSequence(config, list(config.nus), seq, truth, cap)


def recovery_table(truth: Sequence[Profile], found: Sequence[Profile],
                   lattice: SearchLattice) -> list[dict]:
    """Match each planted profile to the extracted profile with the nearest
    trajectory and report per-index parameter errors in lattice cells."""
    rows = []
    for i, tp in enumerate(truth):
        best = None
        for j, fp in enumerate(found):
            cells = {}
            for nu, m in tp.trajectory.items():
                e = fp.trajectory.get(nu)
                if e is None:
                    continue
                cells[nu] = max(float(np.max(np.abs(np.subtract(e.x, m.x)))) / lattice.hx,
                                abs(e.t - m.t) / lattice.ht)
            if not cells:
                continue
            worst = max(cells.values())
            if best is None or worst < best[1]:
                best = (j, worst, cells)
        row = {"planted": i, "matched": None, "max_cells": None, "cells": {},
               "phi_error": None, "phi_l2": tp.phi.l2()}
        if best is not None:
            j, worst, cells = best
            row.update(matched=j, max_cells=worst, cells={str(k): v for k, v in cells.items()},
                       phi_error=(found[j].phi - tp.phi).l2())
        rows.append(row)
    return rows


# ----------------------------------------------------------------------------
# Orthogonality report
# ----------------------------------------------------------------------------


def divergence(a: Profile, b: Profile, nu) -> float:
    """r_a/r_b + r_b/r_a + |z_a - z_b|/r_a for distinct caps, otherwise
    |x_a - x_b| + |t_a - t_b|."""
    ca, cb = a.cap_at(nu), b.cap_at(nu)
    if not _same_cap(ca, cb):
        return (ca.radius / cb.radius + cb.radius / ca.radius
                + float(np.linalg.norm(ca.center - cb.center)) / ca.radius)
    ma, mb = a.params_at(nu), b.params_at(nu)
    return float(np.linalg.norm(np.subtract(ma.x, mb.x))) + abs(ma.t - mb.t)


def report_lattice(densities: Sequence[SurfaceDensity], p: float, T: float, X: float,
                   t0: float = 0.0, x0=()) -> SpaceTimeGrid:
    pts = np.vstack([f.grid.points[np.abs(f.values) > 0] for f in densities])
    wx, wt = spectral_widths(pts)
    q = p if float(p).is_integer() and p % 2 == 0 else 2 * math.ceil(p / 2)
    g = suggest_lattice(densities[0].grid.d, q, wx + 1e-3, wt + 1e-3, T, X)
    return SpaceTimeGrid(g.d, g.T, g.X, g.nt, g.nx, t0, tuple(x0))


@dataclass
class DecompositionReport:
    pieces: list
    nus: list
    remainder_l2: list
    remainder_extension_norm: list
    pythagoras_residual: list
    pairwise_bilinear: np.ndarray
    parameter_divergence: np.ndarray
    superadditivity_lhs: list
    superadditivity_rhs: list
    superadditivity_uncertainty: list

    @property
    def superadditivity_gap(self) -> list:
        return [l - r for l, r in zip(self.superadditivity_lhs, self.superadditivity_rhs)]

    def to_json(self) -> dict:
        return {"pieces": [p.to_json() for p in self.pieces], "nus": list(self.nus),
                "remainder_l2": self.remainder_l2,
                "remainder_extension_norm": self.remainder_extension_norm,
                "pythagoras_residual": self.pythagoras_residual,
                "pairwise_bilinear": np.asarray(self.pairwise_bilinear).tolist(),
                "parameter_divergence": np.asarray(self.parameter_divergence).tolist(),
                "superadditivity_lhs": self.superadditivity_lhs,
                "superadditivity_rhs": self.superadditivity_rhs,
                "superadditivity_gap": self.superadditivity_gap,
                "superadditivity_uncertainty": self.superadditivity_uncertainty}


def alias_period(grid) -> float:
    """Spatial period of the quadrature images of a uniformly spaced chart
    (midpoint layouts); infinite for Gauss-type layouts."""
    chart = grid.chart
    if chart is None or chart.layout not in ("cartesian", "uniform"):
        return math.inf
    h = float(chart.axes[0][1] - chart.axes[0][0])
    return 2.0 * math.pi / (grid.scale * h)


def _window(profiles: Sequence[Profile], nu, T0: float, X0: float):
    """Window in sphere coordinates around the profiles' centres; T0 and X0
    are in rescaled units (t / r^2 and x / r on the sphere)."""
    ts, xs, rs = [], [], []
    for p in profiles:
        m, r = p.params_at(nu), p.cap_at(nu).radius
        ts.append(m.t / r ** 2)
        xs.append(np.asarray(m.x) / r)
        rs.append(r)
    ts, xs, r = np.array(ts), np.array(xs), min(rs)
    t0 = 0.5 * (ts.max() + ts.min())
    x0 = 0.5 * (xs.max(0) + xs.min(0))
    T = T0 / r ** 2 + 0.5 * (ts.max() - ts.min())
    X = X0 / r + 0.5 * float(np.max(xs.max(0) - xs.min(0)))
    return T, X, t0, x0


def orthogonality_report(profiles: Sequence[Profile], nus: Sequence, conv=None,
                         totals: Optional[dict] = None, remainders: Optional[dict] = None,
                         T0: float = 40.0, X0: float = 40.0,
                         grids: Optional[dict] = None) -> DecompositionReport:
    """Per index nu: pairwise L^{1+2/d} product norms of the profile fields,
    the parameter divergences, the L^2 Pythagoras residual and both sides of
    ||sum_j F_j||_p^p <= sum_j ||F_j||_p^p with p = 2 + 4/d.

    ``totals[nu]`` is the density being decomposed (default: the synthesized
    profiles plus ``remainders[nu]``).  Fields are evaluated on one lattice
    per index whose window follows the profiles' space-time centres.
    """
    if not profiles:
        raise ValidationError("need at least one profile")
    d = profiles[0].phi.grid.d
    p = strichartz_exponent(d)
    q = 1.0 + 2.0 / d
    J = len(profiles)
    nus = list(nus)
    bil = np.zeros((len(nus), J, J))
    div = np.zeros((len(nus), J, J))
    rem_l2, rem_ext, pyth, lhs, rhs, unc = [], [], [], [], [], []
    for a, nu in enumerate(nus):
        dens = [profile_density(pr, nu, conv) for pr in profiles]
        tag = _tag(conv, dens[0], d)
        if grids and nu in grids:
            grid = grids[nu]
        else:
            T, X, t0, x0 = _window(profiles, nu, T0, X0)
            grid = report_lattice(dens, p, T, X, t0, x0)
            period = min(alias_period(f.grid) for f in dens)
            if X + float(np.max(np.abs(x0))) > 0.5 * period:
                raise ResolutionError("report window exceeds the alias period of the chart grid")
        fields = [extend_sphere(f, grid, tag) for f in dens]
        for i in range(J):
            for j in range(i, J):
                prod = SpaceTimeField(grid, fields[i].values * fields[j].values, decay=d * (q - 1))
                bil[a, i, j] = bil[a, j, i] = lp_norm(prod, q).value
                div[a, i, j] = div[a, j, i] = 0.0 if i == j else divergence(profiles[i], profiles[j], nu)
        parts = [lp_norm(F, p) for F in fields]
        syn = synthesize(profiles, nu, conv)
        total_field = SpaceTimeField(grid, np.sum([F.values for F in fields], axis=0),
                                     _sphere_envelope(syn, tag.prefactor))
        whole = lp_norm(total_field, p)
        lhs.append(whole.value ** p)
        rhs.append(math.fsum(e.value ** p for e in parts))
        unc.append(p * whole.value ** (p - 1) * whole.uncertainty
                   + math.fsum(p * e.value ** (p - 1) * e.uncertainty for e in parts))
        phi2 = math.fsum(pr.phi.l2() ** 2 for pr in profiles)
        rem = remainders.get(nu) if remainders else None
        r2 = 0.0 if rem is None else l2_sigma_norm(rem) ** 2
        rem_l2.append(math.sqrt(r2))
        rem_ext.append(None if rem is None or r2 == 0 else
                       sphere_quotient(rem, tag).value * math.sqrt(r2))
        if totals and nu in totals:
            tot = l2_sigma_norm(totals[nu]) ** 2
        else:
            tot = l2_sigma_norm(syn) ** 2 + r2
        pyth.append(abs(tot - phi2 - r2))
    return DecompositionReport(list(profiles), nus, rem_l2, rem_ext, pyth, bil, div, lhs, rhs, unc)

