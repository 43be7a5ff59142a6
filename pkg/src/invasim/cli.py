"""
Command-line interface: ``invasim {homogenize,fit,simulate,verify}``.

Exit codes: 0 on success, 1 when a solve, oracle or strict invariant fails,
2 on usage errors.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .io import OUT_ENV, ConfigError

log = logging.getLogger("invasim")

FAMILIES = ("circle", "square", "ellipse")


class UsageError(Exception):
    pass


def _out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "invasim_out")


# ---------------------------------------------------------------------------
# homogenize

def family_specs(family: str, h: float | None = None) -> list:
    """Named cell families as ``(label, PerforationSpec)`` pairs."""
    from .mesh import Circle, Ellipse, PerforationSpec, Square

    if family == "circle":
        h = 0.012 if h is None else h
        return [(f"circle-n{n}", PerforationSpec(1.0, n, Circle(3 / 40), h)) for n in range(1, 7)]
    if family == "square":
        h = 0.048 if h is None else h
        return [(f"square-{k}", PerforationSpec(4.0, 1, Square(0.35 * k), h, origin=(-2.0, -2.0)))
                for k in range(1, 6)]
    if family == "ellipse":
        h = 0.048 if h is None else h
        return [(f"ellipse-n{n}", PerforationSpec(4.0, n, Ellipse(0.6, 0.25, math.pi / 4), h))
                for n in range(1, 5)]
    raise UsageError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")


def _shape_from_section(sec):
    from .mesh import Circle, Ellipse, Square

    kind = sec.get("shape", "none").strip()
    if kind == "circle":
        return Circle(float(sec["radius"]))
    if kind == "square":
        return Square(float(sec["half_side"]))
    if kind == "ellipse":
        return Ellipse(float(sec["semi_major"]), float(sec["semi_minor"]),
                       math.radians(float(sec.get("angle_deg", "0"))))
    if kind == "none":
        return None
    raise ConfigError(f"unknown shape {kind!r}")


_CELL_KEYS = {"cell_side", "n", "shape", "radius", "half_side", "semi_major", "semi_minor",
              "angle_deg", "h", "origin", "mesh"}


def specs_from_file(path: Path) -> list:
    """``[cell LABEL]`` sections describing a perforated cell or naming a mesh file."""
    from .mesh import PerforationSpec

    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    if not path.is_file():
        raise UsageError(f"geometry file not found: {path}")
    cp.read(path)
    out = []
    for name in cp.sections():
        if not name.startswith("cell"):
            raise ConfigError(f"unknown section [{name}]")
        sec = cp[name]
        bad = set(sec) - _CELL_KEYS
        if bad:
            raise ConfigError(f"unknown key(s) {sorted(bad)} in [{name}]")
        label = name[4:].strip() or f"cell{len(out)}"
        if "mesh" in sec:
            out.append((label, path.parent / sec["mesh"]))
            continue
        origin = tuple(float(v) for v in sec.get("origin", "0 0").split())
        out.append((label, PerforationSpec(float(sec["cell_side"]), int(sec.get("n", "1")),
                                           _shape_from_section(sec), float(sec.get("h", "0.02")),
                                           origin=origin)))
    return out


def homogenize_one(label, geometry, d_bar: float, normalization: str, tol: float) -> dict:
    from .homog import effective_tensor
    from .mesh import generate_perforated_cell, import_mesh

    if isinstance(geometry, (str, Path)):
        mesh = import_mesh(geometry)
        t = effective_tensor(mesh, d_bar, normalization=normalization, tol=tol)
    else:
        mesh = generate_perforated_cell(geometry)
        cell = geometry.cell_side ** 2
        t = effective_tensor(mesh, d_bar, normalization=normalization, cell_measure=cell, tol=tol)
    return {"label": label, "tensor": t, "vertices": mesh.n_vertices}


def write_homogenize_csv(rows: list, path: Path) -> None:
    d = rows[0]["tensor"].dim
    if any(r["tensor"].dim != d for r in rows):
        raise UsageError("all geometries must have the same dimension")
    names = [f"D{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["label", "phi", "d_bar", *names, "vertices", "iterations"])
        for r in rows:
            t = r["tensor"]
            wr.writerow([r["label"], repr(t.volume_fraction), repr(t.diffusivity),
                         *[repr(float(v)) for v in t.matrix.ravel()], r["vertices"],
                         "/".join(str(i) for i in t.iterations)])


def read_homogenize_csv(path: Path) -> list:
    """Rows as ``(phi, tensor / d_bar)``."""
    if not path.is_file():
        raise UsageError(f"points file not found: {path}")
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return []
    keys = [k for k in rows[0] if len(k) == 3 and k[0] == "D" and k[1:].isdigit()]
    d = int(round(math.sqrt(len(keys))))
    out = []
    for r in rows:
        D = np.array([float(r[k]) for k in keys]).reshape(d, d)
        out.append((float(r["phi"]), D / float(r.get("d_bar", 1.0) or 1.0)))
    return out


def cmd_homogenize(args) -> int:
    geoms = []
    for fam in args.family or []:
        geoms += family_specs(fam, args.h)
    for m in args.mesh or []:
        geoms.append((Path(m).stem, Path(m)))
    if args.config:
        geoms += specs_from_file(Path(args.config))
    if not geoms:
        raise UsageError("no geometries given (use --family, --mesh or --config)")

    def job(g):
        return homogenize_one(g[0], g[1], args.d_bar, args.normalization, args.tol)

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as ex:
        rows = list(ex.map(job, geoms))
    out = _csv_target(args.out, "homogenize.csv")
    write_homogenize_csv(rows, out)
    for r in rows:
        t = r["tensor"]
        print(f"{r['label']:<14} phi={t.volume_fraction:.4f}  D/D_bar={np.array2string(t.ratio(), precision=5)}")
    print(f"wrote {out}")
    return 0


def _csv_target(arg: str | None, default_name: str) -> Path:
    if arg and Path(arg).suffix:
        p = Path(arg)
    else:
        p = _out_dir(arg) / default_name
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------------------
# fit

def cmd_fit(args) -> int:
    from .diffusivity import build_tensor_interpolant, fit_scalar_cubic, save_model

    pts = read_homogenize_csv(Path(args.points))
    if args.mode == "scalar":
        scalar = [(p, float(np.trace(D) / len(D))) for p, D in pts]
        if len({p for p, _ in scalar if p > 0}) < 3:
            raise UsageError("scalar fit needs at least 3 geometries with distinct volume fractions")
        model = fit_scalar_cubic(scalar, anchor_unit=not args.free)
        alt = fit_scalar_cubic(scalar, anchor_unit=args.free)
        a1, a2, a3 = model.coefficients
        print(f"D(phi)/D(1) = {a3:.4f} phi^3 {a2:+.4f} phi^2 {a1:+.4f} phi")
        print(f"  residual rms {np.sqrt(np.mean(np.square(model.residuals))):.3e}"
              f"  ({'free' if args.free else 'D(1)=1 anchored'})")
        print(f"  alternative ({'anchored' if args.free else 'free'}): "
              f"{tuple(round(c, 4) for c in alt.coefficients)}, residual rms "
              f"{np.sqrt(np.mean(np.square(alt.residuals))):.3e}")
    else:
        if not args.free and not any(abs(p - 1) < 1e-12 for p, _ in pts):
            pts = pts + [(1.0, np.eye(len(pts[0][1])))]
        model = build_tensor_interpolant(pts)
        grid = np.arange(1, 1001) * 1e-3
        ev = np.linalg.eigvalsh(model(grid))
        ok = bool((ev[:, 0] > 0).all())
        print(f"tensor interpolant with {len(model.phis)} knots; SPD on 1e-3 grid: {ok}")
        if not ok:
            return 1
    out = _csv_target(args.out, "model.txt")
    save_model(model, out)
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# simulate / verify

def cmd_simulate(args) -> int:
    from dataclasses import replace

    from .invasion import InvariantError
    from .io import load_config, simulate_to_disk

    if not args.config:
        raise UsageError("simulate needs --config")
    if not Path(args.config).is_file():
        raise UsageError(f"config file not found: {args.config}")
    cfg = load_config(args.config)
    if args.permissive:
        cfg = replace(cfg, permissive=True)
    out = cfg.resolved_output(args.out)
    try:
        res = simulate_to_disk(cfg, out)
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 1
    last = res.metrics[-1]
    print(f"t={last['t']:g} invaded fraction {last['invaded_fraction']:.4f}; "
          f"{len(res.snapshots)} snapshots and metrics.csv in {out}")
    return 0


def cmd_verify(args) -> int:
    from .verify import SUITES, run_suites

    scopes = args.scope or ["ode", "homog", "invasion"]
    for s in scopes:
        if s not in SUITES:
            raise UsageError(f"unknown scope {s!r}; choose from {', '.join(sorted(SUITES))}")
    reports = run_suites(scopes)
    for r in reports:
        print(r.line())
    failed = sum(not r.passed for r in reports)
    print(f"{len(reports) - failed}/{len(reports)} checks passed")
    return 1 if failed else 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="input file (simulation config or geometry list)")
    common.add_argument("--out", help=f"output file or directory (default ${OUT_ENV} or ./invasim_out)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for independent jobs")
    common.add_argument("--permissive", action="store_true",
                        help="downgrade invariant violations to warnings (with clipping)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="invasim", description=__doc__.strip().splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    h = sub.add_parser("homogenize", parents=[common], help="effective tensors of perforated cells")
    h.add_argument("--family", action="append", choices=FAMILIES)
    h.add_argument("--mesh", action="append", help="imported mesh file (any dimension)")
    h.add_argument("--h", type=float, help="target edge length")
    h.add_argument("--d-bar", type=float, default=1.0, help="base diffusivity")
    h.add_argument("--normalization", choices=("cell", "ecm"), default="cell")
    h.add_argument("--tol", type=float, default=1e-10)
    h.set_defaults(func=cmd_homogenize)

    f = sub.add_parser("fit", parents=[common], help="fit a diffusivity model to homogenize output")
    f.add_argument("points", help="CSV written by homogenize")
    f.add_argument("--mode", choices=("scalar", "tensor"), default="scalar")
    f.add_argument("--free", action="store_true",
                   help="do not anchor the model at D(1) = D_bar (scalar: unconstrained least squares)")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", parents=[common], help="run an invasion simulation")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", parents=[common], help="run oracle suites")
    v.add_argument("--scope", action="append", help="ode, homog or invasion (repeatable)")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"invasim {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # solver failures and the like
        print(f"invasim {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
