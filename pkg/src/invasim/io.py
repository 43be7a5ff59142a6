"""
Simulation configuration files, legacy-VTK field output and metrics CSV.

Config files use INI sections with ``key = value`` lines::

    [domain]
    bounds = -1 1 -1 1
    cells = 113 113

    [time]
    tau = 0.01
    T = 5

    [model]
    mu_b = 1
    mu_s = 1

    [initial]
    preset = ellipse2d

    [output]
    snapshot_times = 1 3 5

Omitted model parameters take the reference values. Unknown sections or
keys are errors.
"""
from __future__ import annotations

import ast
import configparser
import csv
import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .invasion import (METRIC_COLUMNS, PRESETS, SUITABILITY_PRESETS, FieldState, ModelParams,
                       initial_preset)
from .mesh import Mesh, generate_rectangle, import_mesh

OUT_ENV = "INVASIM_OUT"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# closed-form initial-condition expressions

_FUNCS = {"exp": np.exp, "cos": np.cos, "sin": np.sin, "sqrt": np.sqrt, "abs": np.abs}
_CONSTS = {"pi": math.pi, "e": math.e}
_COORDS = {"x1": 0, "x2": 1, "x3": 2, "x": 0, "y": 1, "z": 2}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide,
           ast.Pow: np.power}


def compile_expression(text: str):
    """Compile an expression in ``x1, x2, x3`` into ``f(points) -> values``.

    Allowed: numbers, ``pi``, ``e``, ``+ - * / **``, unary minus and the
    functions exp, cos, sin, sqrt, abs.
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    _check_node(tree.body, text)

    def f(x):
        return np.asarray(_eval(tree.body, np.asarray(x, float)), float) * np.ones(len(x))

    f.source = text.strip()
    return f


def _check_node(node, text):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return
    if isinstance(node, ast.Name) and (node.id in _CONSTS or node.id in _COORDS):
        return
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check_node(node.left, text)
        _check_node(node.right, text)
        return
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        _check_node(node.operand, text)
        return
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS
            and len(node.args) == 1 and not node.keywords):
        _check_node(node.args[0], text)
        return
    raise ConfigError(f"unsupported construct {ast.dump(node)[:40]!r} in expression {text!r}")


def _eval(node, x):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id in _CONSTS:
            return _CONSTS[node.id]
        axis = _COORDS[node.id]
        if axis >= x.shape[1]:
            raise ConfigError(f"coordinate {node.id} does not exist in {x.shape[1]}d")
        return x[:, axis]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, x), _eval(node.right, x))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, x)
        return -v if isinstance(node.op, ast.USub) else v
    return _FUNCS[node.func.id](_eval(node.args[0], x))


# ---------------------------------------------------------------------------
# configuration

_MODEL_KEYS = ("kappa_s", "kappa_b", "mu_s", "mu_b", "beta_s", "beta_b", "delta_s", "d_ref")
_SCHEMA = {
    "domain": {"bounds", "cells", "mesh"},
    "time": {"tau", "T"},
    "model": set(_MODEL_KEYS) | {"diffusivity", "suitability_enabled"},
    "initial": {"preset", "phi", "cs", "w", "s"},
    "output": {"directory", "snapshot_every", "snapshot_times"},
    "solver": {"mass", "tol", "mode"},
}


@dataclass
class SimulationConfig:
    bounds: tuple = ((-1.0, 1.0), (-1.0, 1.0))
    cells: tuple = (113, 113)
    mesh_path: str | None = None
    tau: float = 1e-2
    T: float = 5.0
    params: ModelParams = field(default_factory=ModelParams)
    diffusivity: str | None = None  # name or model-file path; None uses the fitted cubic
    preset: str | None = "ellipse2d"
    expressions: dict = field(default_factory=dict)  # field name -> expression text
    output_dir: str | None = None
    snapshot_every: int = 0
    snapshot_times: tuple = ()
    mass: str = "lumped"
    solver_tol: float = 1e-10
    permissive: bool = False

    def validate(self) -> "SimulationConfig":
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if not self.T >= 0:
            raise ConfigError("T must be nonnegative")
        if self.snapshot_every < 0:
            raise ConfigError("snapshot_every must be >= 1 (or 0 to disable)")
        if self.mesh_path is None:
            if len(self.cells) != 2 or min(self.cells) < 1:
                raise ConfigError("cells must be two positive integers")
            if any(hi <= lo for lo, hi in self.bounds):
                raise ConfigError("domain bounds must be increasing")
        if self.preset is None and "phi" not in self.expressions:
            raise ConfigError("an initial preset or a phi expression is required")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.mass not in ("lumped", "consistent"):
            raise ConfigError(f"unknown mass option {self.mass!r}")
        if any(t < 0 or t > self.T + 1e-12 for t in self.snapshot_times):
            raise ConfigError("snapshot times must lie in [0, T]")
        return self

    def build_mesh(self) -> Mesh:
        if self.mesh_path is not None:
            return import_mesh(self.mesh_path)
        return generate_rectangle(self.bounds, *self.cells)

    def initial_state(self, mesh: Mesh) -> FieldState:
        if self.preset is not None:
            st = initial_preset(self.preset, mesh)
        else:
            n = mesh.n_vertices
            st = FieldState(np.ones(n), np.zeros(n), np.zeros(n), np.zeros(n))
        for name, text in self.expressions.items():
            setattr(st, name, compile_expression(text)(mesh.vertices))
        return st

    def resolved_output(self, override: str | None = None) -> Path:
        return Path(override or self.output_dir or os.environ.get(OUT_ENV) or "invasim_out")


def _floats(text: str) -> list:
    return [float(v) for v in text.replace(",", " ").split()]


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_config(text: str, base_dir: Path | None = None) -> SimulationConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (T vs tau)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")

    def get(sec, key):
        return cp[sec][key].strip() if cp.has_section(sec) and key in cp[sec] else None

    cfg = SimulationConfig()
    kw = {}
    try:
        if (v := get("domain", "bounds")) is not None:
            b = _floats(v)
            if len(b) % 2 or not b:
                raise ConfigError("bounds needs lo/hi pairs")
            kw["bounds"] = tuple(zip(b[0::2], b[1::2]))
        if (v := get("domain", "cells")) is not None:
            kw["cells"] = tuple(int(c) for c in v.replace(",", " ").split())
        if (v := get("domain", "mesh")) is not None:
            kw["mesh_path"] = str((base_dir / v) if base_dir and not Path(v).is_absolute() else v)
        if (v := get("time", "tau")) is not None:
            kw["tau"] = float(v)
        if (v := get("time", "T")) is not None:
            kw["T"] = float(v)
        model = {k: float(get("model", k)) for k in _MODEL_KEYS if get("model", k) is not None}
        preset = get("initial", "preset")
        exprs = {k: get("initial", k) for k in ("phi", "cs", "w", "s") if get("initial", k) is not None}
        if preset is None and "phi" not in exprs:
            preset = cfg.preset
        suit = get("model", "suitability_enabled")
        if suit is not None:
            model["suitability_enabled"] = _bool(suit)
        else:
            model["suitability_enabled"] = preset in SUITABILITY_PRESETS or "s" in exprs
        kw["diffusivity"] = get("model", "diffusivity")
        kw["preset"] = preset
        kw["expressions"] = exprs
        kw["output_dir"] = get("output", "directory")
        if (v := get("output", "snapshot_every")) is not None:
            kw["snapshot_every"] = int(v)
        if (v := get("output", "snapshot_times")) is not None:
            kw["snapshot_times"] = tuple(_floats(v))
        if (v := get("solver", "mass")) is not None:
            kw["mass"] = v
        if (v := get("solver", "tol")) is not None:
            kw["solver_tol"] = float(v)
        if (v := get("solver", "mode")) is not None:
            if v not in ("strict", "permissive"):
                raise ConfigError(f"mode must be strict or permissive, not {v!r}")
            kw["permissive"] = v == "permissive"
        params = ModelParams(**model)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    if kw.get("diffusivity"):
        from .diffusivity import resolve_model
        name = kw["diffusivity"]
        if base_dir and not Path(name).is_absolute() and (base_dir / name).exists():
            name = str(base_dir / name)
            kw["diffusivity"] = name
        params = replace(params, diffusivity=resolve_model(name, params.d_ref))
    for e in exprs.values():
        compile_expression(e)
    return replace(cfg, params=params, **kw).validate()


def load_config(path) -> SimulationConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text(), path.parent)


def format_config(cfg: SimulationConfig) -> str:
    lines = ["[domain]"]
    if cfg.mesh_path is not None:
        lines.append(f"mesh = {cfg.mesh_path}")
    else:
        lines.append("bounds = " + " ".join(f"{v!r}" for pair in cfg.bounds for v in pair))
        lines.append("cells = " + " ".join(str(c) for c in cfg.cells))
    lines += ["", "[time]", f"tau = {cfg.tau!r}", f"T = {cfg.T!r}", "", "[model]"]
    for k in _MODEL_KEYS:
        lines.append(f"{k} = {getattr(cfg.params, k)!r}")
    lines.append(f"suitability_enabled = {str(cfg.params.suitability_enabled).lower()}")
    if cfg.diffusivity:
        lines.append(f"diffusivity = {cfg.diffusivity}")
    lines += ["", "[initial]"]
    if cfg.preset is not None:
        lines.append(f"preset = {cfg.preset}")
    for k, v in cfg.expressions.items():
        lines.append(f"{k} = {v}")
    lines += ["", "[output]"]
    if cfg.output_dir is not None:
        lines.append(f"directory = {cfg.output_dir}")
    lines.append(f"snapshot_every = {cfg.snapshot_every}")
    if cfg.snapshot_times:
        lines.append("snapshot_times = " + " ".join(f"{t!r}" for t in cfg.snapshot_times))
    lines += ["", "[solver]", f"mass = {cfg.mass}", f"tol = {cfg.solver_tol!r}",
              f"mode = {'permissive' if cfg.permissive else 'strict'}"]
    return "\n".join(lines) + "\n"


def save_config(cfg: SimulationConfig, path) -> None:
    Path(path).write_text(format_config(cfg))


def config_equal(a: SimulationConfig, b: SimulationConfig) -> bool:
    """Field-wise equality; the diffusivity callable is compared by its source."""
    for f in fields(SimulationConfig):
        if f.name == "params":
            pa, pb = a.params, b.params
            if any(getattr(pa, k) != getattr(pb, k) for k in _MODEL_KEYS + ("suitability_enabled",)):
                return False
        elif getattr(a, f.name) != getattr(b, f.name):
            return False
    return True


# ---------------------------------------------------------------------------
# output

_VTK_CELL = {2: 5, 3: 10}  # triangle, tetrahedron


def write_vtu(mesh: Mesh, fields: dict, path) -> Path:
    """Legacy-VTK ASCII unstructured grid with point-data scalars.

    Numbers are written as ``%.16e`` so the output is bit-stable and
    round-trips exactly.
    """
    path = Path(path)
    nv, ne = mesh.n_vertices, mesh.n_elements
    k = mesh.elements.shape[1]
    pts = np.zeros((nv, 3))
    pts[:, :mesh.dim] = mesh.vertices
    for name, v in fields.items():
        if np.shape(v) != (nv,):
            raise ValueError(f"field {name!r} has shape {np.shape(v)}, expected ({nv},)")
        if not name or any(c.isspace() for c in name):
            raise ValueError(f"invalid field name {name!r}")
    out = ["# vtk DataFile Version 3.0", "invasim", "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {nv} double"]
    out += [" ".join(f"{c:.16e}" for c in p) for p in pts]
    out.append(f"CELLS {ne} {ne * (k + 1)}")
    out += [f"{k} " + " ".join(str(i) for i in e) for e in mesh.elements]
    out.append(f"CELL_TYPES {ne}")
    out += [str(_VTK_CELL[mesh.dim])] * ne
    if fields:
        out.append(f"POINT_DATA {nv}")
        for name, v in fields.items():
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [f"{x:.16e}" for x in np.asarray(v, float)]
    path.write_text("\n".join(out) + "\n")
    return path


def write_metrics_csv(rows, path, columns=METRIC_COLUMNS) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([repr(float(r[c])) if isinstance(r[c], float) else r[c] for c in columns])
    return path


def read_metrics_csv(path) -> list:
    with Path(path).open() as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def simulate_to_disk(cfg: SimulationConfig, out_dir: Path):
    """Run a configured simulation, writing ``snapshot_XXXXX.vtk`` files and ``metrics.csv``."""
    from .invasion import InvasionSolver, integrate

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mesh = cfg.build_mesh()
    solver = InvasionSolver(mesh, cfg.params, mass=cfg.mass, tol=cfg.solver_tol, strict=not cfg.permissive)

    def dump(k, state):
        write_vtu(mesh, state.fields(), out_dir / f"snapshot_{k:05d}.vtk")

    result = integrate(solver, cfg.initial_state(mesh), cfg.tau, cfg.T, cfg.snapshot_every,
                       cfg.snapshot_times, callback=dump)
    write_metrics_csv(result.metrics, out_dir / "metrics.csv")
    save_config(cfg, out_dir / "config.ini")
    return result
