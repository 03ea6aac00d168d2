"""Command-line front end: ``conflab <verb> [options]``.

Exit codes: 0 the command ran (analysis outcomes are in its output),
2 usage or configuration error, 3 data precondition error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import concentration as conc
from . import disk
from .errors import ConflabError, InvalidExponent, MassDeficient, ResolutionTooCoarse
from .kernels import BACKEND
from .metrics import (
    ConformalMetric,
    FunctionalReport,
    make_cylinder_sphere,
    make_dilated_round,
    make_flat_neck_sphere,
    make_perturbed_round,
    make_round,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3

FAMILY_ALIASES = {
    "round": "round",
    "cylinder": "cylinder_sphere",
    "cylinder_sphere": "cylinder_sphere",
    "flat_neck": "flat_neck_sphere",
    "flat_neck_sphere": "flat_neck_sphere",
    "dilated": "dilated_round",
    "dilated_round": "dilated_round",
    "perturbed": "perturbed_round",
    "perturbed_round": "perturbed_round",
}

DEFAULT_SWEEP = "cylinder_sphere:1,2,4;dilated_round:1,10,100;perturbed_round:0.2,0.1,0.05"


class UsageError(Exception):
    pass


@dataclass
class LabConfig:
    grid_n: int = 257
    chart_half_width: float = 2.0
    epsilon1: float = 0.4
    p: float = 2.0
    Lambda_report: float = 10.0
    seed: int = 0
    output_dir: str = ""
    bubble_radius: float = 4.0
    families: str = DEFAULT_SWEEP
    diameter: bool = True

    def validate(self):
        if self.grid_n < 65 or self.grid_n % 2 == 0:
            raise UsageError(f"grid_n must be odd and >= 65, got {self.grid_n}")
        if not 0 < self.epsilon1 < 4 * math.pi:
            raise UsageError(f"epsilon1 must lie in (0, 4 pi), got {self.epsilon1}")
        if self.p < 1:
            raise UsageError(f"p must be >= 1, got {self.p}")
        if not self.chart_half_width > 1:
            raise UsageError("chart_half_width must exceed 1")
        return self

    @property
    def out(self) -> Path:
        path = Path(self.output_dir or os.environ.get("LAB_OUTPUT_DIR") or "lab_output")
        path.mkdir(parents=True, exist_ok=True)
        return path


def _coerce(name, raw):
    types = {f.name: f.type for f in fields(LabConfig)}
    if name not in types:
        raise UsageError(f"unknown configuration key {name!r}")
    kind = types[name]
    try:
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
        if kind in (bool, "bool"):
            if str(raw).lower() in ("1", "true", "yes", "on"):
                return True
            if str(raw).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise UsageError(f"bad value for {name}: {raw!r}") from None
    return str(raw)


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(key, val)
    return out


def build_config(args) -> LabConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config(args.config))
    for f in fields(LabConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = _coerce(f.name, v)
    return LabConfig(**values).validate()


# --------------------------------------------------------------------------- helpers

def _parse_list(text, kind=float):
    try:
        return [kind(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


def _family(name):
    try:
        return FAMILY_ALIASES[name]
    except KeyError:
        raise UsageError(f"unknown family {name!r}; choose from {', '.join(sorted(FAMILY_ALIASES))}") from None


def _make(family, k, cfg: LabConfig) -> ConformalMetric:
    n, hw = cfg.grid_n, cfg.chart_half_width
    if family == "round":
        return make_round(n, hw)
    if family == "cylinder_sphere":
        return make_cylinder_sphere(int(k), n)
    if family == "flat_neck_sphere":
        return make_flat_neck_sphere(int(k), n)
    if family == "dilated_round":
        return make_dilated_round(conc.DILATION_CENTER, float(k), n, hw)
    if family == "perturbed_round":
        return make_perturbed_round(cfg.seed, float(k), n, hw)
    raise UsageError(f"unknown family {family!r}")


def _metric_from_args(args, cfg):
    if getattr(args, "metric", None):
        try:
            return ConformalMetric.load(args.metric), Path(args.metric).stem, ""
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot load metric {args.metric}: {exc}") from None
    if not getattr(args, "family", None):
        raise UsageError("give --metric FILE or --family NAME --k VALUE")
    fam = _family(args.family)
    k = args.k if args.k is not None else "1"
    return _make(fam, float(k) if fam not in ("cylinder_sphere", "flat_neck_sphere") else int(float(k)), cfg), fam, k


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _say(msg):
    print(msg, file=sys.stdout)


# --------------------------------------------------------------------------- verbs

def cmd_examples(args, cfg):
    fam = _family(args.family)
    ks = [None] if fam == "round" else _parse_list(args.k or "1",
                                                   int if fam in ("cylinder_sphere", "flat_neck_sphere") else float)
    out = cfg.out
    mdir = out / "metrics"
    mdir.mkdir(exist_ok=True)
    rows = []
    for k in ks:
        g = _make(fam, k, cfg)
        label = fam if k is None else f"{fam}_k{k}"
        g.save(mdir / f"{label}.json")
        rows.append(g.functionals(cfg.p).csv_row(label, "" if k is None else k, cfg.grid_n))
    path = out / f"examples_{fam}.csv"
    with open(path, "w") as fh:
        from .metrics import write_functional_csv
        write_functional_csv(rows, fh)
    _say(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def cmd_functionals(args, cfg):
    g, label, k = _metric_from_args(args, cfg)
    row = g.functionals(cfg.p).csv_row(label, k, g.atlas.n)
    path = cfg.out / f"functionals_{label}.csv"
    from .metrics import write_functional_csv
    with open(path, "w") as fh:
        write_functional_csv([row], fh)
    _say(", ".join(f"{k}={v}" for k, v in row.items()))
    return EXIT_OK


def cmd_normalize(args, cfg):
    g, label, k = _metric_from_args(args, cfg)
    res = conc.normalize(g, cfg.epsilon1, args.max_iter, strategy=args.strategy)
    rep = g.functionals(cfg.p)
    doc = {
        "sigma": res.sigma.to_dict(), "u_prime_sup": res.u_prime_sup, "rho_before": res.rho_before,
        "rho_after": res.rho_after, "iterations": res.iterations, "converged": res.converged,
        "center_norm": res.center_norm,
    }
    _write_json(cfg.out / f"normalize_{label}.json", doc)
    row = {f: "" for f in conc.DIAGNOSTIC_FIELDS}
    row.update(family=label, k=k, n=g.atlas.n, epsilon1=cfg.epsilon1, area=rep.area,
               entropy=rep.entropy, dev1=rep.dev1, rho_before=res.rho_before,
               rho_after=res.rho_after, u_prime_sup=res.u_prime_sup)
    if not res.converged:
        row["error"] = f"normalize did not converge (|c|={res.center_norm:.3g})"
    with open(cfg.out / f"normalize_{label}.csv", "w") as fh:
        conc.write_diagnostics_csv([row], fh)
    _say(json.dumps(_jsonable(doc), sort_keys=True))
    return EXIT_OK


def cmd_bubble(args, cfg):
    g, label, k = _metric_from_args(args, cfg)
    R = args.R if args.R is not None else cfg.bubble_radius
    rep = conc.bubble_extract(g, cfg.epsilon1, R, n=cfg.grid_n)
    doc = {"center": list(rep.center.as_array()), "t": rep.t, "mass": rep.mass,
           "bubble_deviation": rep.bubble_deviation, "pde_residual": rep.pde_residual,
           "rho": rep.rho, "R": R}
    _write_json(cfg.out / f"bubble_{label}.json", doc)
    rep.v_prime.save(cfg.out / f"bubble_{label}_vprime.json")
    _say(json.dumps(_jsonable(doc), sort_keys=True))
    return EXIT_OK


def _disk_sources(cfg, seeds, n):
    rng = np.random.default_rng(cfg.seed)
    return [disk.random_source(rng, n, l1=rng.uniform(0.1, 1.0)) for _ in range(seeds)]


def cmd_diskpde(args, cfg):
    check = args.check
    n = cfg.grid_n
    reports = []
    if check in ("lq", "osc") and args.q is not None and not 0 < args.q < 2:
        raise InvalidExponent(f"q must lie in (0, 2), got {args.q}")
    if check == "brezis-merle":
        eps = args.eps if args.eps is not None else 1.0
        if not 0 < eps < 4 * math.pi:
            raise UsageError("eps must lie in (0, 4 pi)")
        for f in _disk_sources(cfg, args.seeds, n):
            reports.append(disk.brezis_merle_check(f, eps))
    elif check == "lq":
        q = args.q if args.q is not None else 1.0
        radii = _parse_list(args.radii) if args.radii else (0.125, 0.25, 0.5)
        if not all(0 < r <= 0.5 for r in radii):
            raise UsageError("radii must lie in (0, 1/2]")
        for f in _disk_sources(cfg, args.seeds, n):
            reports.append(disk.lq_gradient_check(f, q, radii, args.scaling))
    elif check == "osc":
        q = args.q if args.q is not None else 1.0
        for f in _disk_sources(cfg, args.seeds, n):
            reports.append(disk.osc_bound_check(f, q))
    elif check in ("eps-reg", "lp-reg"):
        eps = args.eps if args.eps is not None else 0.05
        fam = disk.bubble_family(eps, args.members, n)
        if check == "eps-reg":
            reports.append(disk.epsilon_regularity_experiment(fam, eps, cfg.Lambda_report))
        else:
            if cfg.p < 1:
                raise InvalidExponent("p must be >= 1")
            reports.append(disk.lp_regularity_experiment(fam, eps, cfg.Lambda_report, cfg.p))
    path = cfg.out / f"diskpde_{check}.csv"
    with open(path, "w") as fh:
        disk.write_estimate_csv(reports, fh)
    held = sum(1 for r in reports if r.holds)
    _say(f"wrote {len(reports)} rows to {path}"
         + (f"; holds=true for {held}/{len(reports)}" if check == "brezis-merle" else "")
         + f"; max constant_estimate={max(r.constant_estimate for r in reports):.6g}")
    return EXIT_OK


def parse_families(text):
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise UsageError(f"family entry {part!r} must look like name:k1,k2")
        name, ks = part.split(":", 1)
        fam = _family(name.strip())
        if fam == "round":
            raise UsageError("the sweep runs sequence families; round is dilated_round with k=1")
        kind = int if fam in ("cylinder_sphere", "flat_neck_sphere") else float
        out.append((fam, _parse_list(ks, kind)))
    if not out:
        raise UsageError("no families configured")
    return out


def cmd_sweep(args, cfg):
    if not args.config:
        raise UsageError("sweep needs a config file")
    plan = parse_families(cfg.families)
    rows, timings = [], []
    t0 = time.perf_counter()
    for fam, ks in plan:
        rows += conc.sequence_diagnostics(fam, ks, cfg.grid_n, cfg.epsilon1, cfg.bubble_radius,
                                          cfg.seed, cfg.diameter, timings)
    out = cfg.out
    with open(out / "sweep.csv", "w") as fh:
        conc.write_diagnostics_csv(rows, fh)
    manifest = {
        "config": dataclasses.asdict(cfg),
        "versions": {"conflab": __version__, "numpy": np.__version__,
                     "scipy": __import__("scipy").__version__, "python": platform.python_version(),
                     "kernels": BACKEND},
        "wall_times": timings,
        "total_seconds": time.perf_counter() - t0,
        "rows": len(rows),
        "failed_rows": sum(1 for r in rows if r["error"]),
    }
    _write_json(out / "sweep_manifest.json", manifest)
    _say(f"wrote {len(rows)} rows to {out / 'sweep.csv'} in {manifest['total_seconds']:.1f}s")
    if rows and all(r["error"] and r["area"] == "" for r in rows):
        return EXIT_DATA
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def _add_config_flags(p):
    p.add_argument("--config", help="flat key = value configuration file")
    for f in fields(LabConfig):
        p.add_argument(f"--{f.name}", dest=f.name, default=None,
                       help=f"override {f.name} (default {f.default})")


def _add_metric_source(p):
    p.add_argument("--metric", help="metric JSON file written by 'examples'")
    p.add_argument("--family", help="example family instead of a file")
    p.add_argument("--k", help="family parameter")


def build_parser():
    parser = argparse.ArgumentParser(prog="conflab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"conflab {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("examples", help="build example metrics and their functionals")
    p.add_argument("--family", required=True)
    p.add_argument("--k", help="comma-separated parameters")
    _add_config_flags(p)
    p.set_defaults(func=cmd_examples)

    p = sub.add_parser("functionals", help="area, entropy and curvature deviation of a metric")
    _add_metric_source(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_functionals)

    p = sub.add_parser("normalize", help="Möbius-normalize a metric")
    _add_metric_source(p)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=30)
    p.add_argument("--strategy", choices=("centering", "nelder_mead"), default="centering")
    _add_config_flags(p)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("bubble", help="extract and compare the bubble at the concentration point")
    _add_metric_source(p)
    p.add_argument("--R", type=float, default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_bubble)

    p = sub.add_parser("diskpde", help="planar disk estimates")
    p.add_argument("check", choices=("brezis-merle", "lq", "osc", "eps-reg", "lp-reg"))
    p.add_argument("--eps", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--radii")
    p.add_argument("--scaling", choices=("literal", "scale_invariant"), default="literal")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--members", type=int, default=10)
    _add_config_flags(p)
    p.set_defaults(func=cmd_diskpde)

    p = sub.add_parser("sweep", help="sequence diagnostics over the configured families")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    try:
        cfg = build_config(args)
        return args.func(args, cfg)
    except (UsageError, InvalidExponent) as exc:
        print(f"conflab {args.verb}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MassDeficient, ResolutionTooCoarse) as exc:
        print(f"conflab {args.verb}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConflabError as exc:
        print(f"conflab {args.verb}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
