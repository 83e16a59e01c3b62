"""Kernel gallery with exact metadata and numerical checks of the moment conditions.

A :class:`Kernel` bundles an evaluable function on ``R^d`` with the
quantities the deviation theory depends on: the sup norm, the order, and
the Lebesgue measures of the sets where the kernel is positive and
negative.  Built-in kernels are product kernels, so their quadrature is a
tensor product of composite Gauss-Legendre rules whose panels follow the
kernel's discontinuities.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigurationError, NumericError
from .quadrature import piecewise_legendre, tensor_rule

__all__ = [
    "Kernel",
    "SignedIndicatorKernel",
    "OrderReport",
    "SupportMeasures",
    "BUILTIN_NAMES",
    "GAUSSIAN_CUTOFF",
    "KERNEL_SCHEMA",
    "make_builtin",
    "kernel_from_spec",
    "from_callable",
    "verify_order",
    "support_measures",
    "certify",
    "fourth_order_constants",
]

BUILTIN_NAMES = ("uniform", "epanechnikov", "gaussian", "fourth_order_signed")

# Radius where the standard normal density drops to 1e-12; tail mass ~3e-13 per axis.
GAUSSIAN_CUTOFF = math.sqrt(-2.0 * math.log(1e-12 * math.sqrt(2.0 * math.pi)))

KERNEL_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"enum": list(BUILTIN_NAMES)},
        "d": {"type": "integer", "minimum": 1},
        "order": {"type": ["integer", "null"], "minimum": 2},
        "support_radius": {"type": ["number", "null"]},
        "custom": {
            "type": "object",
            "properties": {
                "intervals": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                    "minItems": 1,
                },
                "tabulated": {
                    "type": "object",
                    "properties": {
                        "z": {"type": "array", "items": {"type": "number"}, "minItems": 2},
                        "k": {"type": "array", "items": {"type": "number"}, "minItems": 2},
                    },
                    "required": ["z", "k"],
                },
            },
            "oneOf": [{"required": ["intervals"]}, {"required": ["tabulated"]}],
        },
    },
    "oneOf": [{"required": ["name"]}, {"required": ["custom"]}],
}


def fourth_order_constants():
    """Inner and outer half-widths ``(a, b)`` of the signed fourth-order kernel."""
    c = 2.0 ** (1.0 / 3.0)
    a = c / 6.0 + c * c / 12.0 + 1.0 / 3.0
    b = c / 3.0 + c * c / 6.0 + 1.0 / 6.0
    return a, b


@dataclass(frozen=True, eq=False)
class Kernel:
    """Immutable kernel on ``R^d``.

    ``breaks`` are the one-dimensional panel boundaries shared by every axis;
    quadrature is exact up to Gauss-Legendre error inside each panel.
    ``verified`` is False for user kernels until :func:`certify` has run.
    """

    name: str
    dim: int
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    breaks: tuple
    support_radius: float
    sup_norm: float
    order: int | None
    lambda_splus: float
    lambda_sminus: float
    verified: bool = True
    spec: dict = field(default_factory=dict, repr=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.dim == 1 and (z.ndim == 0 or z.shape[-1] != 1):
            z = z[..., None]
        if z.shape[-1] != self.dim:
            raise ValueError(f"expected points with last axis {self.dim}, got shape {z.shape}")
        flat = z.reshape(-1, self.dim)
        return self.func(flat).reshape(z.shape[:-1])

    @property
    def nonnegative(self):
        return self.lambda_sminus == 0.0

    @property
    def compact(self):
        return math.isfinite(self.support_radius)

    @property
    def box_radius(self):
        """Half-width of the box that carries the quadrature (the Gaussian is truncated)."""
        return float(max(abs(self.breaks[0]), abs(self.breaks[-1])))

    def quadrature(self, nodes=64):
        """Tensor rule ``(points, weights)`` covering the (truncated) support."""
        key = ("quad", int(nodes))
        if key not in self._cache:
            rule = piecewise_legendre(self.breaks, nodes)
            pts, wts = tensor_rule([rule] * self.dim)
            pts.setflags(write=False)
            wts.setflags(write=False)
            self._cache[key] = (pts, wts)
        return self._cache[key]

    def integral(self, nodes=64):
        pts, wts = self.quadrature(nodes)
        return float(wts @ self.func(pts))

    def l2_norm_sq(self, nodes=64):
        """``int K(z)**2 dz``, cached."""
        key = ("l2", int(nodes))
        if key not in self._cache:
            pts, wts = self.quadrature(nodes)
            self._cache[key] = float(wts @ self.func(pts) ** 2)
        return self._cache[key]

    def to_json(self):
        out = dict(self.spec)
        out.setdefault("d", self.dim)
        out["order"] = self.order
        out["support_radius"] = None if not self.compact else self.support_radius
        return out


@dataclass(frozen=True, eq=False)
class SignedIndicatorKernel(Kernel):
    """``K = 1_D - 1_D'`` on the real line with disjoint interval unions ``D``, ``D'``."""

    D: tuple = ()
    Dprime: tuple = ()

    @property
    def lambda_D(self):
        return self.lambda_splus

    @property
    def lambda_Dprime(self):
        return self.lambda_sminus


def _product(factor):
    def func(z):
        return np.prod(factor(z), axis=-1)

    return func


def _uniform_1d(z):
    return (np.abs(z) <= 0.5).astype(float)


def _epanechnikov_1d(z):
    return np.where(np.abs(z) <= 1.0, 0.75 * (1.0 - z * z), 0.0)


def _gaussian_1d(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _indicator_union(intervals, z):
    out = np.zeros_like(z, dtype=bool)
    for lo, hi in intervals:
        out |= (z >= lo) & (z <= hi)
    return out


def _signed_indicator(D, Dprime, name, order, spec):
    measure_d = sum(hi - lo for lo, hi in D)
    measure_dp = sum(hi - lo for lo, hi in Dprime)
    # D is closed; D' loses any point it shares with D, keeping the sets disjoint.
    def func(z):
        z = z[:, 0]
        pos = _indicator_union(D, z)
        neg = _indicator_union(Dprime, z) & ~pos
        return pos.astype(float) - neg.astype(float)

    edges = sorted({e for iv in (*D, *Dprime) for e in iv})
    return SignedIndicatorKernel(
        name=name,
        dim=1,
        func=func,
        breaks=tuple(edges),
        support_radius=max(abs(edges[0]), abs(edges[-1])),
        sup_norm=1.0,
        order=order,
        lambda_splus=measure_d,
        lambda_sminus=measure_dp,
        spec=spec,
        D=tuple(D),
        Dprime=tuple(Dprime),
    )


def make_builtin(name, d=1):
    """Build one of the gallery kernels.

    ``uniform``, ``epanechnikov`` and ``gaussian`` are product kernels in any
    dimension; ``fourth_order_signed`` is the signed indicator kernel
    ``1_[-a,a] - 1_[-b,-a) U (a,b]`` and exists only for ``d = 1``.
    """
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ConfigurationError(f"kernel dimension must be a positive integer, got {d!r}")
    d = int(d)
    spec = {"name": name, "d": d}
    if name == "uniform":
        return Kernel(name, d, _product(_uniform_1d), (-0.5, 0.5), 0.5, 1.0, 2, 1.0, 0.0, spec=spec)
    if name == "epanechnikov":
        return Kernel(
            name, d, _product(_epanechnikov_1d), (-1.0, 1.0), 1.0, 0.75**d, 2, 2.0**d, 0.0, spec=spec
        )
    if name == "gaussian":
        r = GAUSSIAN_CUTOFF
        return Kernel(
            name,
            d,
            _product(_gaussian_1d),
            (-r, 0.0, r),
            math.inf,
            (2.0 * math.pi) ** (-d / 2.0),
            2,
            math.inf,
            0.0,
            spec=spec,
        )
    if name == "fourth_order_signed":
        if d != 1:
            raise ConfigurationError("fourth_order_signed is defined only for d = 1")
        a, b = fourth_order_constants()
        return _signed_indicator(((-a, a),), ((-b, -a), (a, b)), name, 4, spec)
    raise ConfigurationError(f"unknown kernel {name!r}; expected one of {BUILTIN_NAMES}")


def _check_normalised(kernel, tol=1e-8):
    total = kernel.integral(64)
    if abs(total - 1.0) > tol:
        raise ConfigurationError(f"kernel integrates to {total!r}, not 1")
    return kernel


def kernel_from_spec(spec):
    """Kernel from its JSON description (see ``KERNEL_SCHEMA``)."""
    if isinstance(spec, str):
        spec = json.loads(spec)
    import jsonschema

    try:
        jsonschema.validate(spec, KERNEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigurationError(f"invalid kernel spec: {exc.message}") from None
    if "name" in spec:
        return make_builtin(spec["name"], spec.get("d", 1))
    if spec.get("d", 1) != 1:
        raise ConfigurationError("custom kernels are supported only for d = 1")
    custom = spec["custom"]
    order = spec.get("order")
    if "intervals" in custom:
        kernel = _from_intervals(custom["intervals"], order, spec)
    else:
        kernel = _from_table(custom["tabulated"]["z"], custom["tabulated"]["k"], order, spec)
    return _check_normalised(kernel)


def _from_intervals(intervals, order, spec):
    ivs = sorted((float(lo), float(hi), float(val)) for lo, hi, val in intervals)
    for lo, hi, _ in ivs:
        if not hi > lo:
            raise ConfigurationError(f"empty interval [{lo}, {hi}]")
    for (_, hi0, _), (lo1, _, _) in zip(ivs, ivs[1:]):
        if lo1 < hi0:
            raise ConfigurationError("custom kernel intervals overlap")
    lows = np.array([iv[0] for iv in ivs])
    highs = np.array([iv[1] for iv in ivs])
    vals = np.array([iv[2] for iv in ivs])

    def func(z):
        z = z[:, 0]
        out = np.zeros_like(z)
        for lo, hi, v in zip(lows, highs, vals):
            out = np.where((z >= lo) & (z < hi), v, out)
        return out

    edges = sorted({e for lo, hi, _ in ivs for e in (lo, hi)})
    plus = float(np.sum((highs - lows)[vals > 0]))
    minus = float(np.sum((highs - lows)[vals < 0]))
    common = dict(
        dim=1,
        breaks=tuple(edges),
        support_radius=max(abs(edges[0]), abs(edges[-1])),
        sup_norm=float(np.max(np.abs(vals))),
        order=order,
        lambda_splus=plus,
        lambda_sminus=minus,
        verified=False,
        spec=spec,
    )
    if set(np.unique(vals)) <= {-1.0, 0.0, 1.0}:
        D = tuple((lo, hi) for lo, hi, v in ivs if v > 0)
        Dp = tuple((lo, hi) for lo, hi, v in ivs if v < 0)
        return SignedIndicatorKernel(name="custom_indicator", func=func, D=D, Dprime=Dp, **common)
    return Kernel(name="custom_intervals", func=func, **common)


def _from_table(zs, ks, order, spec):
    zs = np.asarray(zs, dtype=float)
    ks = np.asarray(ks, dtype=float)
    if zs.shape != ks.shape or np.any(np.diff(zs) <= 0):
        raise ConfigurationError("tabulated kernel needs increasing z and matching k")

    def func(z):
        return np.interp(z[:, 0], zs, ks, left=0.0, right=0.0)

    return Kernel(
        name="custom_tabulated",
        dim=1,
        func=func,
        breaks=tuple(zs),
        support_radius=float(max(abs(zs[0]), abs(zs[-1]))),
        sup_norm=float(np.max(np.abs(ks))),
        order=order,
        lambda_splus=math.nan,
        lambda_sminus=math.nan,
        verified=False,
        spec=spec,
    )


def from_callable(func, d=1, support_radius=1.0, breaks=None, name="custom"):
    """Wrap a vectorised ``func((N, d)) -> (N,)`` supported in ``[-R, R]^d``.

    The result is unverified and its sign measures are unknown (NaN) until
    :func:`certify` is applied.
    """
    R = float(support_radius)
    if not (R > 0 and math.isfinite(R)):
        raise ConfigurationError("callable kernels need a finite positive support radius")
    brk = tuple(sorted(breaks)) if breaks is not None else (-R, R)
    probe = np.linspace(-R, R, 401)
    grid = np.stack(np.meshgrid(*([probe] * d), indexing="ij"), axis=-1).reshape(-1, d)
    sup = float(np.max(np.abs(func(grid))))
    kernel = Kernel(
        name=name,
        dim=d,
        func=func,
        breaks=brk,
        support_radius=R,
        sup_norm=sup,
        order=None,
        lambda_splus=math.nan,
        lambda_sminus=math.nan,
        verified=False,
        spec={"name": name, "d": d, "callable": True},
    )
    return _check_normalised(kernel)


class OrderReport(NamedTuple):
    """Moment check: ``moments[j, s-1]`` is the (max-abs) coordinate-``j`` moment of order ``s``."""

    order: int
    moments: np.ndarray
    abs_moment: np.ndarray
    passed: bool
    residual: float

    def to_json(self):
        return {
            "order": self.order,
            "moments": self.moments.tolist(),
            "abs_moment": self.abs_moment.tolist(),
            "pass": bool(self.passed),
            "residual": self.residual,
        }


def _coordinate_moments(kernel, p, nodes):
    # The inner one-dimensional integral over y_j is evaluated at every
    # tensor node of the remaining coordinates; the largest magnitude is kept.
    d = kernel.dim
    x1, w1 = piecewise_legendre(kernel.breaks, nodes)
    pts, wts = tensor_rule([(x1, w1)] * d)
    vals = kernel.func(pts).reshape((x1.size,) * d)
    moments = np.empty((d, p - 1))
    absm = np.empty(d)
    for j in range(d):
        moved = np.moveaxis(vals, j, -1)
        for s in range(1, p):
            inner = moved @ (w1 * x1**s)
            moments[j, s - 1] = inner.flat[np.argmax(np.abs(inner))] if inner.ndim else float(inner)
        absm[j] = float(wts @ np.abs(pts[:, j] ** p * kernel.func(pts)))
    return moments, absm


def verify_order(kernel, p, tol=1e-10, nodes=64):
    """Check that coordinate moments of orders ``1..p-1`` vanish and the ``p``-th is finite.

    Raises
    ------
    NumericError
        If doubling the panel node count changes any moment by more than ``tol``.
    """
    if p < 2:
        raise ConfigurationError("kernel order must be at least 2")
    moments, absm = _coordinate_moments(kernel, p, nodes)
    fine, fine_abs = _coordinate_moments(kernel, p, 2 * nodes)
    residual = float(np.max(np.abs(fine - moments), initial=0.0))
    scale = max(1.0, float(np.max(fine_abs)))
    if residual > tol or abs(float(np.max(fine_abs - absm))) > 1e-6 * scale:
        raise NumericError("moment quadrature did not converge", estimate=residual)
    passed = bool(np.all(np.abs(moments) <= tol) and np.all(np.isfinite(absm)))
    return OrderReport(int(p), moments, absm, passed, residual)


class SupportMeasures(NamedTuple):
    plus: float
    minus: float
    uncertainty: float = 0.0


def _table_measures(zs, ks):
    plus = minus = 0.0
    for z0, z1, k0, k1 in zip(zs[:-1], zs[1:], ks[:-1], ks[1:]):
        width = z1 - z0
        if k0 * k1 < 0:
            cross = width * abs(k0) / (abs(k0) + abs(k1))
            plus += cross if k0 > 0 else width - cross
            minus += width - cross if k0 > 0 else cross
        elif max(k0, k1) > 0:
            plus += width
        elif min(k0, k1) < 0:
            minus += width
    return plus, minus


def _grid_measures(kernel, base=64, depth=6):
    R = kernel.support_radius
    d = kernel.dim
    edges = np.linspace(-R, R, base + 1)
    lo = np.stack(np.meshgrid(*([edges[:-1]] * d), indexing="ij"), -1).reshape(-1, d)
    width = np.full(lo.shape[0], edges[1] - edges[0])
    plus = minus = 0.0
    offsets = np.stack(np.meshgrid(*([[0.0, 0.5, 1.0]] * d), indexing="ij"), -1).reshape(-1, d)
    for level in range(depth + 1):
        probes = lo[:, None, :] + width[:, None, None] * offsets[None]
        vals = kernel.func(probes.reshape(-1, d)).reshape(probes.shape[:2])
        vol = width**d
        all_pos = np.all(vals > 0, axis=1)
        all_neg = np.all(vals < 0, axis=1)
        all_zero = np.all(vals == 0, axis=1)
        plus += float(vol[all_pos].sum())
        minus += float(vol[all_neg].sum())
        mixed = ~(all_pos | all_neg | all_zero)
        if level == depth or not mixed.any():
            return plus, minus, float(vol[mixed].sum())
        lo, width = lo[mixed], width[mixed] / 2.0
        halves = np.stack(np.meshgrid(*([[0.0, 1.0]] * d), indexing="ij"), -1).reshape(-1, d)
        lo = (lo[:, None, :] + width[:, None, None] * halves[None]).reshape(-1, d)
        width = np.repeat(width, halves.shape[0])
    return plus, minus, 0.0


def support_measures(kernel):
    """Lebesgue measures ``(lambda(S+), lambda(S-), uncertainty)`` of the sign sets.

    Built-in and interval kernels are exact.  Tabulated kernels are exact
    (linear pieces).  Callable kernels use adaptive grid counting; the
    uncertainty is the volume of cells whose sign stayed unresolved.
    """
    if not (math.isnan(kernel.lambda_splus) or math.isnan(kernel.lambda_sminus)):
        return SupportMeasures(kernel.lambda_splus, kernel.lambda_sminus, 0.0)
    tab = kernel.spec.get("custom", {}).get("tabulated")
    if tab is not None:
        plus, minus = _table_measures(np.asarray(tab["z"], float), np.asarray(tab["k"], float))
        return SupportMeasures(plus, minus, 0.0)
    return SupportMeasures(*_grid_measures(kernel))


def certify(kernel, p, tol=1e-10):
    """Run the order and sign-measure checks and return a verified copy.

    Raises
    ------
    ConfigurationError
        If the kernel is not of order ``p``.
    """
    report = verify_order(kernel, p, tol)
    if not report.passed:
        raise ConfigurationError(f"kernel {kernel.name!r} is not of order {p}: moments {report.moments.tolist()}")
    plus, minus, _ = support_measures(kernel)
    return dataclasses.replace(
        kernel, order=int(p), lambda_splus=plus, lambda_sminus=minus, verified=True, _cache={}
    )
