"""
Volume-fraction dependent effective diffusivities.

Two model kinds:

* :class:`ScalarCubicModel` -- ``D(phi) = D_ref (a1 phi + a2 phi^2 + a3 phi^3)``,
  fitted by least squares to homogenized values.
* :class:`TensorInterpolant` -- piecewise interpolation of SPD tensors with a
  linear first segment from the zero tensor at ``phi = 0`` and Log-Euclidean
  segments between positive knots.

Both are callables mapping an array of ``phi`` values to diffusivities.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SPD_RTOL = 1e-12


class NotSPDError(ValueError):
    pass


@dataclass(frozen=True)
class ScalarCubicModel:
    coefficients: tuple  # (a1, a2, a3)
    d_ref: float = 1.0
    residuals: tuple = ()

    def __call__(self, phi):
        p = np.clip(np.asarray(phi, float), 0.0, 1.0)
        a1, a2, a3 = self.coefficients
        return self.d_ref * p * (a1 + p * (a2 + p * a3))

    def with_reference(self, d_ref: float) -> "ScalarCubicModel":
        return ScalarCubicModel(self.coefficients, float(d_ref), self.residuals)

    def is_positive(self, step: float = 1e-3) -> bool:
        grid = np.arange(1, int(round(1 / step)) + 1) * step
        return bool((self(grid) > 0).all())


# fitted polynomials reported for the circle/sphere lattices and square/cube cells
REFERENCE_2D = ScalarCubicModel((0.42, 0.33, 0.25))
REFERENCE_3D = ScalarCubicModel((2.46, -2.35, 0.89))
SQUARE_2D = ScalarCubicModel((0.60, -0.27, 0.67))
SQUARE_3D = ScalarCubicModel((2.62, -2.94, 1.32))
NAMED_MODELS = {"reference2d": REFERENCE_2D, "reference3d": REFERENCE_3D, "square2d": SQUARE_2D, "square3d": SQUARE_3D}


def fit_scalar_cubic(points, anchor_unit: bool = True, d_ref: float = 1.0) -> ScalarCubicModel:
    """Least-squares cubic through the origin.

    Parameters
    ----------
    points : sequence of (phi, D/D_ref)
        The point (0, 0) may be included; it is satisfied exactly by the
        basis {phi, phi^2, phi^3} and carries no information.
    anchor_unit : bool
        Constrain ``D(1) = D_ref`` (coefficients sum to one), i.e. the
        unperforated cell value is matched exactly. Without it, plain least
        squares over the basis is used.
    """
    pts = np.asarray(points, float).reshape(-1, 2)
    phi, val = pts[:, 0], pts[:, 1]
    if len(np.unique(phi[phi > 0])) < 3:
        raise ValueError("need at least 3 distinct positive volume fractions to fit a cubic")
    A = np.column_stack([phi, phi ** 2, phi ** 3])
    if anchor_unit:
        # D = phi + a2 (phi^2 - phi) + a3 (phi^3 - phi)
        B = A[:, 1:] - A[:, :1]
        sol, *_ = np.linalg.lstsq(B, val - phi, rcond=None)
        coef = np.array([1.0 - sol.sum(), sol[0], sol[1]])
    else:
        if np.linalg.matrix_rank(A) < 3:
            raise ValueError("rank-deficient design")
        coef, *_ = np.linalg.lstsq(A, val, rcond=None)
    res = val - A @ coef
    return ScalarCubicModel(tuple(float(c) for c in coef), d_ref, tuple(float(r) for r in res))


def eval_scalar(model: ScalarCubicModel, phi):
    return model(phi)


# ---------------------------------------------------------------------------
# SPD tensors

def check_spd(D, rtol: float = SPD_RTOL) -> np.ndarray:
    D = np.asarray(D, float)
    if D.shape[-1] != D.shape[-2] or not np.allclose(D, np.swapaxes(D, -1, -2), rtol=0, atol=1e-12 * np.abs(D).max()):
        raise NotSPDError("tensor is not symmetric")
    ev = np.linalg.eigvalsh(D)
    if (ev[..., 0] <= rtol * ev[..., -1]).any() or (ev[..., -1] <= 0).any():
        raise NotSPDError(f"tensor is not positive definite (eigenvalues {ev})")
    return D


def logm_spd(D) -> np.ndarray:
    ev, V = np.linalg.eigh(check_spd(D))
    return (V * np.log(ev)[..., None, :]) @ np.swapaxes(V, -1, -2)


def expm_sym(L) -> np.ndarray:
    L = np.asarray(L, float)
    ev, V = np.linalg.eigh(0.5 * (L + np.swapaxes(L, -1, -2)))
    out = (V * np.exp(ev)[..., None, :]) @ np.swapaxes(V, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))  # exactly symmetric, not just to round-off


def log_euclidean_interp(D1, D2, phi1: float, phi2: float, phi) -> np.ndarray:
    """``expm( (phi2-phi)/(phi2-phi1) logm D1 + (phi-phi1)/(phi2-phi1) logm D2 )``.

    ``phi`` may be a scalar or array; the result has shape ``phi.shape + (d, d)``.
    """
    if not phi2 > phi1:
        raise ValueError("need phi1 < phi2")
    t = (np.asarray(phi, float) - phi1) / (phi2 - phi1)
    L1, L2 = logm_spd(D1), logm_spd(D2)
    L = (1 - t)[..., None, None] * L1 + t[..., None, None] * L2
    out = expm_sym(L)
    # endpoints reproduce the knots exactly rather than via exp(log(.))
    out = np.where((t == 0)[..., None, None], np.asarray(D1, float), out)
    return np.where((t == 1)[..., None, None], np.asarray(D2, float), out)


@dataclass(frozen=True)
class TensorInterpolant:
    """Knots ``phi_1 < ... < phi_m`` with SPD tensors; the zero tensor is
    implicitly attached to ``phi_0 = 0``."""

    phis: tuple
    tensors: np.ndarray
    d_ref: float = 1.0
    _logs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        phis = np.asarray(self.phis, float)
        T = np.asarray(self.tensors, float)
        if len(phis) == 0 or len(phis) != len(T):
            raise ValueError("one tensor per knot required")
        if phis[0] <= 0 or (np.diff(phis) <= 0).any() or phis[-1] > 1 + 1e-12:
            raise ValueError("knots must be increasing in (0, 1]")
        object.__setattr__(self, "phis", tuple(phis.tolist()))
        object.__setattr__(self, "tensors", T)
        object.__setattr__(self, "_logs", np.array([logm_spd(D) for D in T]))

    @property
    def dim(self) -> int:
        return self.tensors.shape[-1]

    def __call__(self, phi):
        p = np.clip(np.asarray(phi, float), 0.0, 1.0)
        knots = np.asarray(self.phis)
        T = self.tensors
        out = np.empty(p.shape + (self.dim, self.dim))
        first = p <= knots[0]
        out[first] = (p[first] / knots[0])[:, None, None] * T[0]
        rest = ~first
        if rest.any():
            pr = np.minimum(p[rest], knots[-1])  # constant extrapolation above the last knot
            k = np.clip(np.searchsorted(knots, pr, side="right") - 1, 0, len(knots) - 2) if len(knots) > 1 else np.zeros(len(pr), int)
            if len(knots) == 1:
                out[rest] = T[0]
            else:
                t = (pr - knots[k]) / (knots[k + 1] - knots[k])
                L = (1 - t)[:, None, None] * self._logs[k] + t[:, None, None] * self._logs[k + 1]
                val = expm_sym(L)
                val = np.where((t == 0)[:, None, None], T[k], val)
                val = np.where((t == 1)[:, None, None], T[k + 1], val)
                out[rest] = val
        return self.d_ref * out

    def with_reference(self, d_ref: float) -> "TensorInterpolant":
        return TensorInterpolant(self.phis, self.tensors, float(d_ref))


def build_tensor_interpolant(points, d_ref: float = 1.0) -> TensorInterpolant:
    """From ``[(phi, D), ...]``; a ``phi = 0`` entry (zero tensor) is dropped."""
    pts = sorted(((float(p), np.asarray(D, float)) for p, D in points), key=lambda x: x[0])
    pts = [(p, D) for p, D in pts if p > 0]
    return TensorInterpolant(tuple(p for p, _ in pts), np.array([D for _, D in pts]), d_ref)


def eval_tensor(model: TensorInterpolant, phi):
    return model(phi)


# ---------------------------------------------------------------------------
# model files: "key = value" lines

def save_model(model, path) -> None:
    lines = []
    if isinstance(model, ScalarCubicModel):
        lines += ["kind = scalar", "coefficients = " + ", ".join(f"{c:.17g}" for c in model.coefficients)]
    elif isinstance(model, TensorInterpolant):
        lines += ["kind = tensor", f"dim = {model.dim}"]
        for p, D in zip(model.phis, model.tensors):
            lines.append(f"knot = {p:.17g}; " + ", ".join(f"{v:.17g}" for v in D.ravel()))
    else:
        raise TypeError(f"cannot save {type(model).__name__}")
    lines.append(f"d_ref = {model.d_ref:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path):
    kind, coef, dim, d_ref, knots = None, None, None, 1.0, []
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "kind":
            kind = val
        elif key == "coefficients":
            coef = tuple(float(v) for v in val.split(","))
        elif key == "dim":
            dim = int(val)
        elif key == "d_ref":
            d_ref = float(val)
        elif key == "knot":
            p, entries = val.split(";")
            knots.append((float(p), [float(v) for v in entries.split(",")]))
        else:
            raise ValueError(f"{path}:{n}: unknown key {key!r}")
    if kind == "scalar":
        if coef is None or len(coef) != 3:
            raise ValueError(f"{path}: scalar model needs three coefficients")
        return ScalarCubicModel(coef, d_ref)
    if kind == "tensor":
        if dim is None or not knots:
            raise ValueError(f"{path}: tensor model needs dim and knots")
        return TensorInterpolant(tuple(p for p, _ in knots),
                                 np.array([np.reshape(v, (dim, dim)) for _, v in knots]), d_ref)
    raise ValueError(f"{path}: unknown model kind {kind!r}")


def resolve_model(name_or_path: str, d_ref: float):
    """Named reference fit (``reference2d`` ...) or a model file, scaled to ``d_ref``."""
    if name_or_path in NAMED_MODELS:
        return NAMED_MODELS[name_or_path].with_reference(d_ref)
    return load_model(name_or_path).with_reference(d_ref)
