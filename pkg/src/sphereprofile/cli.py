"""Batch driver: one subcommand per experiment, a key=value config file,
JSON/CSV artifacts and a run manifest.

Exit status: 0 success, 1 usage error, 2 validation failure (bad or
unreadable config, invalid parameters), 3 numerical-resolution failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import DomainError, FitError, ResolutionError, ValidationError

SUBCOMMANDS = ("net", "whitney", "extend", "norms", "refine", "bilinear", "decompose",
               "plant", "constants", "compare")
OUT_ENV = "SPHEREPROFILE_OUT"
DEFAULT_OUT = "sphereprofile_out"


@dataclass
class ExperimentConfig:
    dim: int = 2
    n: int = 0  # surface grid resolution; 0 picks a per-command default
    T: float = 0.0  # time truncation; 0 picks a per-command default
    X: float = 0.0  # space truncation; 0 picks a per-command default
    level: int = 3
    max_level: int = 4
    delta: float = 0.5
    eps: float = 1e-3
    alpha: float = 0.5
    c0: float = 0.5
    profiles: int = 2
    speed: float = 3.0
    nus: tuple = (2, 4, 6, 8)
    noise: float = 0.0
    lattice_hx: float = 1.0
    lattice_ht: float = 1.0
    lattice_margin: float = 2.0
    corpus: int = 8
    separations: tuple = (4, 8, 16, 32)
    cap_radius: float = 0.025
    steps: int = 40
    radii: tuple = (0.4, 0.2, 0.1, 0.05)
    samples: int = 10_000
    seed: int = 0
    convention: str = "fourier"
    out: str = ""

    def validate(self) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ValidationError(msg)

        need(self.dim in (1, 2), "dim must be 1 or 2")
        need(self.n >= 0, "n must be nonnegative")
        need(self.T >= 0 and self.X >= 0, "T and X must be nonnegative")
        need(self.level >= 0 and self.max_level >= 0, "levels must be nonnegative")
        need(0 < self.delta < 1, "delta must lie in (0, 1)")
        need(0 < self.alpha < 1, "alpha must lie in (0, 1)")
        need(self.eps > 0 and self.c0 > 0, "eps and c0 must be positive")
        need(self.profiles >= 1, "profiles must be at least 1")
        need(len(self.nus) >= 1 and all(v > 0 for v in self.nus), "nus must be positive")
        need(self.noise >= 0, "noise must be nonnegative")
        need(self.lattice_hx > 0 and self.lattice_ht > 0 and self.lattice_margin >= 0,
             "search-lattice spacings must be positive")
        need(self.corpus >= 1 and self.samples >= 1 and self.steps >= 1,
             "corpus, samples and steps must be positive")
        need(len(self.separations) >= 3 and all(s > 1 for s in self.separations),
             "need at least three separations, each > 1")
        need(0 < self.cap_radius <= 0.5, "cap_radius must lie in (0, 1/2]")
        need(len(self.radii) >= 1 and all(0 < r <= 0.5 for r in self.radii),
             "radii must lie in (0, 1/2]")
        need(self.convention in ("fourier", "bare"), "convention must be fourier or bare")
        need(all(math.isfinite(float(v)) for v in (self.T, self.X, self.delta, self.eps,
                                                   self.speed, self.noise)),
             "parameters must be finite")
        return self

    def hashed_fields(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_fields(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _coerce(name: str, raw: str, default):
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(v) if "." in v or "e" in v.lower() else int(v)
                         for v in raw.replace(",", " ").split())
        return raw
    except ValueError as exc:
        raise ValidationError(f"bad value for {name}: {raw!r}") from exc


def parse_config_text(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Lines ``key = value``; ``#`` starts a comment; lists are comma or
    space separated."""
    cfg = base or ExperimentConfig()
    known = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValidationError(f"line {lineno}: unknown key {key!r}")
        updates[key] = _coerce(key, val, getattr(cfg, key))
    return dataclasses.replace(cfg, **updates)


def load_config(path: Optional[str], overrides: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        cfg = parse_config_text(text, cfg)
    cfg = dataclasses.replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg.validate()


# ----------------------------------------------------------------------------
# Artifact writing
# ----------------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


class Run:
    """Collects artifacts of one subcommand under <out>/<subcommand>/."""

    def __init__(self, cmd: str, cfg: ExperimentConfig):
        self.cmd = cmd
        self.cfg = cfg
        self.hash = cfg.config_hash()
        self.root = Path(cfg.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
        self.dir = self.root / cmd
        self.dir.mkdir(parents=True, exist_ok=True)
        self.artifacts: list[str] = []
        self.t0 = time.perf_counter()

    def json(self, name: str, payload: dict) -> Path:
        body = {"config_hash": self.hash, "subcommand": self.cmd,
                "config": self.cfg.hashed_fields(), **payload}
        text = json.dumps(_clean(body), indent=1, sort_keys=True) + "\n"
        return self._write(name, text)

    def csv(self, name: str, header: list, rows) -> Path:
        buf = io.StringIO()
        buf.write(f"# config_hash={self.hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        return self._write(name, buf.getvalue())

    def _write(self, name: str, text: str) -> Path:
        p = self.dir / name
        p.write_text(text)
        self.artifacts.append(name)
        return p

    def manifest(self, status: int) -> Path:
        import scipy

        digests = {a: hashlib.sha256((self.dir / a).read_bytes()).hexdigest()
                   for a in self.artifacts}
        body = {"subcommand": self.cmd, "config_hash": self.hash,
                "config": self.cfg.hashed_fields(), "status": status,
                "wall_time_s": time.perf_counter() - self.t0,
                "versions": {"sphereprofile": __version__, "python": platform.python_version(),
                             "numpy": np.__version__, "scipy": scipy.__version__},
                "artifacts": digests}
        p = self.dir / "manifest.json"
        p.write_text(json.dumps(_clean(body), indent=1, sort_keys=True) + "\n")
        return p


# ----------------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------------


def _conv(cfg: ExperimentConfig):
    from .extension import ConventionTag

    return ConventionTag.named(cfg.convention, cfg.dim)


def _random_densities(cfg: ExperimentConfig, count: int, n_default: int):
    from .quadrature import build_disk_grid, random_density

    grid = build_disk_grid(cfg.dim, cfg.n or n_default)
    rng = np.random.default_rng(cfg.seed)
    return [random_density(grid, rng).normalized() for _ in range(count)]


def cmd_net(run: Run) -> None:
    from .geometry import build_cap_net, net_certificate

    cfg = run.cfg
    net = build_cap_net(cfg.dim, cfg.level)
    cert = net_certificate(net, cfg.samples, cfg.seed)
    run.json("net.json", {"net": net.to_json(), "certificate": cert})


def cmd_whitney(run: Run) -> None:
    from .geometry import whitney_certificate, whitney_pairs

    cfg = run.cfg
    depth = max(cfg.level, 1)
    pairs = whitney_pairs(cfg.dim, depth)
    cert = whitney_certificate(cfg.dim, depth, cfg.samples, cfg.seed, pairs)
    run.json("whitney.json", {"pairs": [p.to_json() for p in pairs], "certificate": cert})


def cmd_extend(run: Run) -> None:
    from .extension import default_lattice, extend_sphere

    cfg = run.cfg
    f = _random_densities(cfg, 1, 32 if cfg.dim == 2 else 64)[0]
    lat = default_lattice(f, cfg.T or 20.0, cfg.X or None)
    F = extend_sphere(f, lat, _conv(cfg))
    xs, ts = lat.xs, lat.ts
    vals = F.values

    def rows():
        for i, t in enumerate(ts):
            for j, x in enumerate(xs):
                v = vals[i, j]
                yield [float(t), *map(float, x), float(v.real), float(v.imag)]

    names = ["t"] + [f"x{k + 1}" for k in range(cfg.dim)] + ["re", "im"]
    run.csv("field.csv", names, rows())
    run.json("extend.json", {"lattice": lat.to_json(), "grid_size": f.grid.size,
                             "sup_abs": float(np.max(np.abs(vals)))})


def cmd_norms(run: Run) -> None:
    from .extension import sphere_quotient

    cfg = run.cfg
    conv = _conv(cfg)
    out = []
    for k, f in enumerate(_random_densities(cfg, cfg.corpus, 48 if cfg.dim == 2 else 128)):
        a = sphere_quotient(f, conv, method="convolution")
        b = sphere_quotient(f, conv, method="space-time")
        out.append({"index": k, "convolution": a.value, "convolution_uncertainty": a.uncertainty,
                    "space_time": b.value, "space_time_uncertainty": b.uncertainty,
                    "difference": abs(a.value - b.value),
                    "combined_uncertainty": a.uncertainty + b.uncertainty})
    run.json("norms.json", {"quotients": out})
    run.csv("norms.csv", list(out[0].keys()), ([r[k] for k in r] for r in out))


def cmd_refine(run: Run) -> None:
    from .refinement import fit_envelope, refined_inequality_report

    cfg = run.cfg
    recs = [refined_inequality_report(f, cfg.max_level, _conv(cfg))
            for f in _random_densities(cfg, cfg.corpus, 32 if cfg.dim == 2 else 128)]
    fit = fit_envelope(recs)
    run.json("refine.json", {"records": [r.to_json() for r in recs], "envelope": fit.to_json()})
    run.csv("refine.csv", ["extension_norm", "concentration", "l2"],
            ([r.extension_norm, r.concentration, r.l2] for r in recs))


def cmd_bilinear(run: Run) -> None:
    from .refinement import bilinear_decay

    cfg = run.cfg
    fit = bilinear_decay(cfg.dim, cfg.cap_radius, cfg.separations, cfg.n or 32, _conv(cfg))
    run.json("bilinear.json", {"fit": fit.to_json(), "cap_radius": cfg.cap_radius})
    run.csv("bilinear.csv", ["N", "norm"], zip(fit.separations, fit.norms))


def _plant_config(cfg: ExperimentConfig):
    from .decomposition import default_plant_config

    kw = {"noise": cfg.noise, "seed": cfg.seed}
    if cfg.n:
        kw["n"] = cfg.n
    return default_plant_config(cfg.dim, cfg.speed, cfg.nus, count=cfg.profiles, **kw)


def cmd_plant(run: Run) -> None:
    from .decomposition import plant_sequence

    pc = _plant_config(run.cfg)
    ps = plant_sequence(pc)
    run.json("plant.json", {"plant": pc.to_json(),
                            "truth": [p.to_json() for p in ps.profiles],
                            "sequence_l2": [g.l2() for g in ps.sequence]})


def _search_lattice(cfg: ExperimentConfig, pc):
    from .decomposition import SearchLattice

    nmax = max(pc.nus)
    xr = max(max((abs(v) for v in (s.vx or (0.0,))), default=0.0) for s in pc.profiles)
    tr = max(s.vt for s in pc.profiles)
    m = cfg.lattice_margin
    return SearchLattice.uniform(xr * nmax + m, cfg.lattice_hx, -m / 2,
                                 tr * nmax + m, cfg.lattice_ht)


def cmd_decompose(run: Run) -> None:
    from .decomposition import (PlantConfig, PlantedProfileSpec, extract_profiles,
                                lift_to_cap, orthogonality_report, plant_sequence,
                                recovery_table)

    cfg = run.cfg
    src = run.root / "plant" / "plant.json"
    if src.exists():
        try:
            raw = json.loads(src.read_text())["plant"]
            specs = tuple(PlantedProfileSpec(**{k: tuple(v) if isinstance(v, list) else v
                                                for k, v in p.items()})
                          for p in raw["profiles"])
            pc = PlantConfig(d=raw["d"], profiles=specs, nus=tuple(raw["nus"]), n=raw["n"],
                             cap_radius=raw["cap_radius"], noise=raw["noise"], seed=raw["seed"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"unreadable plant artifact {src}: {exc}") from exc
    else:
        pc = _plant_config(cfg)
    ps = plant_sequence(pc)
    lat = _search_lattice(cfg, pc)
    res = extract_profiles(ps.sequence, cfg.eps, 2 * len(pc.profiles),
                           lat, nus=ps.nus, cap=ps.cap)
    table = recovery_table(ps.profiles, res.profiles, lat)
    conv = _conv(cfg)
    payload = {"plant": pc.to_json(), "search_lattice": lat.to_json(),
               "extraction": res.to_json(), "recovery": table}
    if res.profiles:
        totals = {nu: ps.density(nu, conv) for nu in ps.nus}
        rems = {nu: lift_to_cap(e, ps.cap, conv) for nu, e in zip(ps.nus, res.errors)}
        rep = orthogonality_report(res.profiles, ps.nus, conv, totals=totals, remainders=rems)
        payload["report"] = rep.to_json()
        J = len(res.profiles)
        rows = [[nu, i, j, float(rep.pairwise_bilinear[a, i, j]),
                 float(rep.parameter_divergence[a, i, j])]
                for a, nu in enumerate(rep.nus) for i in range(J) for j in range(J)]
        run.csv("pairwise_bilinear.csv", ["nu", "i", "j", "product_norm", "divergence"], rows)
    run.json("decomposition.json", payload)


def cmd_constants(run: Run) -> None:
    from .constants import concentration_curve, estimate_R_P

    cfg = run.cfg
    conv = _conv(cfg)
    rp = estimate_R_P(cfg.dim, conv)
    curve = concentration_curve(cfg.dim, cfg.radii, conv)
    run.json("constants.json", {"R_P": rp.to_json(), "concentration_curve": curve})
    run.csv("concentration_curve.csv", ["r", "quotient", "uncertainty"], curve)


def cmd_compare(run: Run) -> None:
    from .constants import comparison_report

    cfg = run.cfg
    rep = comparison_report(cfg.dim, _conv(cfg), cfg.steps, cfg.radii, cfg.seed, cfg.n or None)
    run.json("comparison.json", rep.to_json())
    run.csv("concentration_curve.csv", ["r", "quotient", "uncertainty"], rep.concentration_curve)
    rows = [[a["init"], k, h[0], h[1]] for a in rep.ascents if "init" in a
            for k, h in enumerate(a["history"])]
    run.csv("ascent_history.csv", ["init", "iteration", "step", "lattice_quotient"], rows)


COMMANDS = {"net": cmd_net, "whitney": cmd_whitney, "extend": cmd_extend, "norms": cmd_norms,
            "refine": cmd_refine, "bilinear": cmd_bilinear, "decompose": cmd_decompose,
            "plant": cmd_plant, "constants": cmd_constants, "compare": cmd_compare}


# ----------------------------------------------------------------------------
# Entry point
# ----------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sphereprofile", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--dim", type=int)
    p.add_argument("--level", type=int)
    p.add_argument("--profiles", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--convention", choices=("fourier", "bare"))
    p.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"dim": args.dim, "level": args.level, "profiles": args.profiles,
                 "seed": args.seed, "convention": args.convention, "out": args.out}
    try:
        cfg = load_config(args.config, overrides)
        run = Run(args.subcommand, cfg)
    except (ValidationError, DomainError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return 2
    status = 0
    try:
        COMMANDS[args.subcommand](run)
    except (ValidationError, DomainError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        status = 2
    except (ResolutionError, FitError) as exc:
        print(f"resolution failure: {exc}", file=sys.stderr)
        status = 3
    run.manifest(status)
    if status == 0:
        print(f"{args.subcommand}: wrote {', '.join(run.artifacts)} to {run.dir}")
    return status


if __name__ == "__main__":
    sys.exit(main())
