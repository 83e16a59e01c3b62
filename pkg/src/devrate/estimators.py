"""Nadaraya-Watson and semi-recursive kernel regression estimators, plus a quadrature bias probe."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericError
from .schedules import hn

__all__ = [
    "EvalPoint",
    "RecursiveState",
    "BiasTable",
    "as_dataset",
    "eval_nw",
    "eval_semirec",
    "nw_ratio",
    "new_recursive",
    "update_recursive",
    "bias_probe",
    "loglog_slope",
    "load_dataset",
    "load_eval_grid",
]


@dataclass(frozen=True)
class EvalPoint:
    """Estimator output at one point; ``zero_density`` marks the ``g = 0`` branch (``r`` set to 0)."""

    x: np.ndarray
    m: np.ndarray
    g: float
    r: np.ndarray
    n: int
    zero_density: bool

    def to_json(self):
        return {
            "x": self.x.tolist(),
            "m": self.m.tolist(),
            "g": self.g,
            "r": self.r.tolist(),
            "n": self.n,
            "zero_density": self.zero_density,
        }


def nw_ratio(m, g):
    """``m / g`` with the convention ``0`` where ``g == 0``; broadcasts over leading axes."""
    m = np.asarray(m, dtype=float)
    g = np.asarray(g, dtype=float)
    zero = g == 0
    safe = np.where(zero, 1.0, g)
    return np.where(zero[..., None], 0.0, m / safe[..., None])


def as_dataset(data, d=None, q=None):
    """Normalise ``(X, Y)`` arrays or a list of ``(x, y)`` pairs to 2-D float arrays."""
    if isinstance(data, tuple) and len(data) == 2 and all(isinstance(a, np.ndarray) for a in data):
        X, Y = data
    else:
        pairs = list(data)
        if not pairs:
            raise InputError("dataset is empty")
        X = [np.atleast_1d(np.asarray(p[0], dtype=float)) for p in pairs]
        Y = [np.atleast_1d(np.asarray(p[1], dtype=float)) for p in pairs]
        try:
            X, Y = np.stack(X), np.stack(Y)
        except ValueError:
            raise InputError("observations have inconsistent dimensions") from None
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] == 0:
        raise InputError("dataset is empty")
    if X.shape[0] != Y.shape[0]:
        raise InputError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    if d is not None and X.shape[1] != d:
        raise InputError(f"expected {d}-dimensional X, got {X.shape[1]}")
    if q is not None and Y.shape[1] != q:
        raise InputError(f"expected {q}-dimensional Y, got {Y.shape[1]}")
    return X, Y


def _point(x, d):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise InputError(f"evaluation point must have dimension {d}, got shape {x.shape}")
    return x


def eval_nw(data, k, h, x):
    """Nadaraya-Watson estimate at ``x`` with fixed bandwidth ``h``.

    ``m_n = sum Y_i K((x - X_i)/h) / (n h^d)``, ``g_n`` likewise without ``Y``,
    and ``r_n = m_n / g_n`` or ``0`` when ``g_n = 0``.
    """
    if not h > 0:
        raise InputError("bandwidth must be positive")
    X, Y = as_dataset(data, d=k.dim)
    x = _point(x, k.dim)
    n, d = X.shape
    w = k((x - X) / h)
    scale = n * h**d
    m = (w @ Y) / scale
    g = float(np.sum(w) / scale)
    r = nw_ratio(m, g)
    return EvalPoint(x, m, g, r, n, g == 0.0)


def eval_semirec(data, k, sched, x):
    """Semi-recursive estimate: observation ``i`` is smoothed with its own bandwidth ``h_i``."""
    X, Y = as_dataset(data, d=k.dim)
    x = _point(x, k.dim)
    n, d = X.shape
    h = hn(sched, np.arange(1, n + 1))
    w = k((x - X) / h[:, None]) / h**d
    m = (w @ Y) / n
    g = float(np.sum(w) / n)
    return EvalPoint(x, m, g, nw_ratio(m, g), n, g == 0.0)


@dataclass(frozen=True)
class RecursiveState:
    """Running sums of the semi-recursive estimator at a fixed point ``x``.

    ``s_m = sum Y_i K((x - X_i)/h_i) / h_i^d`` and ``s_g`` likewise; ``i`` counts
    observations.  Updates return a new state.
    """

    x: np.ndarray
    kernel: object
    s_m: np.ndarray
    s_g: float
    i: int

    @property
    def m(self):
        return self.s_m / self.i if self.i else np.zeros_like(self.s_m)

    @property
    def g(self):
        return self.s_g / self.i if self.i else 0.0

    @property
    def r(self):
        return nw_ratio(self.m, self.g)

    def snapshot(self):
        return EvalPoint(self.x.copy(), self.m, float(self.g), self.r, self.i, self.g == 0.0)


def new_recursive(k, x, q=1):
    return RecursiveState(_point(x, k.dim), k, np.zeros(q), 0.0, 0)


def update_recursive(state, obs, sched):
    """Fold in observation ``i + 1`` with bandwidth ``h_{i+1}``."""
    xi, yi = obs
    xi = _point(xi, state.kernel.dim)
    yi = np.atleast_1d(np.asarray(yi, dtype=float))
    if yi.shape != state.s_m.shape:
        raise InputError(f"response must have dimension {state.s_m.size}")
    h = hn(sched, state.i + 1)
    w = float(state.kernel((state.x - xi) / h)) / h**state.kernel.dim
    return RecursiveState(state.x, state.kernel, state.s_m + w * yi, state.s_g + w, state.i + 1)


@dataclass(frozen=True)
class BiasTable:
    """Rows ``(n, h_n, |E m_n - m|, |E g_n - g|)`` and fitted log-log slopes against ``h_n``."""

    rows: list
    slope_m: float
    slope_g: float

    def to_json(self):
        return {
            "rows": [dict(zip(("n", "h", "bias_m", "bias_g"), r)) for r in self.rows],
            "slope_m": self.slope_m,
            "slope_g": self.slope_g,
        }


def loglog_slope(h, y):
    """Least-squares slope of ``log y`` on ``log h``; ``nan`` when any ``y`` vanishes."""
    h = np.asarray(h, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(h) < 2 or np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(y), 1)[0])


def bias_probe(model, k, sched, x, ns, nodes=64):
    """Exact (quadrature) bias of ``m_n`` and ``g_n`` at ``x`` along ``h_n``.

    ``E m_n(x) - m(x) = int K(y) [m(x - h y) - m(x)] dy`` and similarly for
    ``g``.  Only ``model.m`` and ``model.g`` are used.
    """
    x = _point(x, k.dim)
    pts, wts = k.quadrature(nodes)
    kz = k(pts)
    m0, g0 = np.atleast_1d(model.m(x)), float(model.g(x))
    rows = []
    for n in ns:
        h = hn(sched, n)
        shifted = x - h * pts
        bm = (wts * kz) @ (np.atleast_2d(model.m(shifted)).reshape(len(pts), -1) - m0)
        bg = float((wts * kz) @ (model.g(shifted) - g0))
        if not (np.all(np.isfinite(bm)) and np.isfinite(bg)):
            raise NumericError("bias quadrature produced non-finite values", estimate=None)
        rows.append((int(n), float(h), float(np.linalg.norm(bm)), abs(bg)))
    hs = [r[1] for r in rows]
    return BiasTable(rows, loglog_slope(hs, [r[2] for r in rows]), loglog_slope(hs, [r[3] for r in rows]))


def load_dataset(path):
    """Read a CSV with columns ``x_1..x_d, y_1..y_q``; lines starting with '#' are skipped."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(line for line in fh if not line.startswith("#")) if row]
    if not rows:
        raise InputError(f"{path}: no header row")
    header, body = rows[0], rows[1:]
    xcols = [i for i, name in enumerate(header) if name.strip().startswith("x_")]
    ycols = [i for i, name in enumerate(header) if name.strip().startswith("y_")]
    if not xcols or not ycols or len(xcols) + len(ycols) != len(header):
        raise InputError(f"{path}: header must be x_1..x_d, y_1..y_q, got {header}")
    try:
        arr = np.array([[float(v) for v in row] for row in body], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if arr.size == 0:
        raise InputError(f"{path}: dataset is empty")
    return as_dataset((arr[:, xcols], arr[:, ycols]))


def load_eval_grid(path_or_obj, d):
    """Evaluation points from JSON ``{"points": [[...], ...]}`` (or a bare list)."""
    obj = path_or_obj
    if isinstance(obj, str):
        with open(obj, encoding="utf-8") as fh:
            obj = json.load(fh)
    pts = obj["points"] if isinstance(obj, dict) else obj
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if d == 1 else pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != d:
        raise InputError(f"grid points must have dimension {d}")
    return pts
