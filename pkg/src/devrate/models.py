"""Analytic joint models for ``(X, Y)`` with ``Y = r(X) + eps`` and ``X`` independent of ``eps``.

Every model exposes the conditional cumulant generating function
``kappa_t(w) = log E[exp(<w, Y>) | X = t]`` in closed form together with its
gradient and Hessian, so that the Laplace transform
``M_t(w) = int exp(<w, y>) f(t, y) dy = g(t) exp(kappa_t(w))`` never needs a
quadrature over ``y``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConfigurationError

__all__ = [
    "FAMILIES",
    "MODEL_SCHEMA",
    "RegressionFunction",
    "JointModel",
    "build_model",
    "sample",
    "stream",
    "write_samples_csv",
]

FAMILIES = ("gaussian_noise", "bounded_noise", "symmetric_y")

_vec = {"type": "array", "items": {"type": "number"}}
_mat = {"type": "array", "items": _vec}
_num_or_vec = {"oneOf": [{"type": "number"}, _vec]}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "family": {"enum": list(FAMILIES)},
        "dx": {"type": "integer", "minimum": 1},
        "dy": {"type": "integer", "minimum": 1},
        "regression": {
            "oneOf": [
                {"enum": ["zero", "sin", "linear", "quadratic"]},
                {
                    "type": "object",
                    "properties": {
                        "intercept": _num_or_vec,
                        "linear": {"oneOf": [{"type": "number"}, _mat]},
                        "quadratic": {"oneOf": [{"type": "number"}, _mat]},
                        "sine": {"oneOf": [{"type": "number"}, _mat]},
                    },
                    "additionalProperties": False,
                },
            ]
        },
        "x_mean": _num_or_vec,
        "x_scale": _num_or_vec,
        "sigma": _num_or_vec,
        "cov": _mat,
        "half_width": _num_or_vec,
        "shift": _num_or_vec,
        "spread": _num_or_vec,
    },
    "required": ["family"],
    "additionalProperties": False,
}


@dataclass(frozen=True, eq=False)
class RegressionFunction:
    """``r(x) = c + B x + C x**2 + D sin(x)`` with elementwise square and sine.

    ``B``, ``C`` and ``D`` have shape ``(q, d)``.
    """

    intercept: np.ndarray
    linear: np.ndarray
    quadratic: np.ndarray
    sine: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = t @ self.linear.T + (t * t) @ self.quadratic.T + np.sin(t) @ self.sine.T
        return out + self.intercept

    def to_json(self):
        return {
            "intercept": self.intercept.tolist(),
            "linear": self.linear.tolist(),
            "quadratic": self.quadratic.tolist(),
            "sine": self.sine.tolist(),
        }


def _as_vector(value, size, name, default):
    if value is None:
        value = default
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(size, float(arr))
    if arr.shape != (size,):
        raise ConfigurationError(f"{name} must have length {size}, got shape {arr.shape}")
    return arr


def _as_matrix(value, q, d, name):
    if value is None:
        return np.zeros((q, d))
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full((q, d), float(arr))
    if arr.shape != (q, d):
        raise ConfigurationError(f"{name} must have shape ({q}, {d}), got {arr.shape}")
    return arr


def _regression(spec, q, d):
    if spec is None or spec == "zero":
        spec = {}
    elif isinstance(spec, str):
        spec = {spec if spec != "sin" else "sine": 1.0}
    return RegressionFunction(
        intercept=_as_vector(spec.get("intercept"), q, "intercept", 0.0),
        linear=_as_matrix(spec.get("linear"), q, d, "linear"),
        quadratic=_as_matrix(spec.get("quadratic"), q, d, "quadratic"),
        sine=_as_matrix(spec.get("sine"), q, d, "sine"),
    )


# log(sinh(x)/x) and its first two derivatives, stable at 0 and for large |x|.
def _logsinhc(x):
    ax = np.abs(x)
    small = ax < 1e-2
    safe = np.where(small, 1.0, ax)
    big = safe + np.log1p(-np.exp(-2.0 * safe)) - np.log(2.0 * safe)
    x2 = x * x
    return np.where(small, x2 / 6.0 - x2 * x2 / 180.0 + x2**3 / 2835.0, big)


def _logsinhc_d1(x):
    small = np.abs(x) < 1e-2
    safe = np.where(small, 1.0, x)
    x2 = x * x
    return np.where(small, x / 3.0 - x * x2 / 45.0 + 2.0 * x * x2 * x2 / 945.0, 1.0 / np.tanh(safe) - 1.0 / safe)


def _logsinhc_d2(x):
    small = np.abs(x) < 1e-2
    safe = np.where(small, 1.0, x)
    with np.errstate(over="ignore"):
        inv_sinh2 = 1.0 / np.sinh(safe) ** 2
    x2 = x * x
    return np.where(small, 1.0 / 3.0 - x2 / 15.0 + 2.0 * x2 * x2 / 189.0, 1.0 / safe**2 - inv_sinh2)


def _logcosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0)


def stream(seed, *keys):
    """Counter-based generator keyed by ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


@dataclass(frozen=True, eq=False)
class JointModel:
    """Joint law of ``(X, Y)``: ``X ~ N(x_mean, diag(x_scale**2))``, ``Y = r(X) + eps``.

    Arrays of points ``t`` have shape ``(..., dx)`` and arguments ``w`` shape
    ``(..., dy)``; outputs broadcast over the leading axes.
    """

    family: str
    dx: int
    dy: int
    regression: RegressionFunction
    x_mean: np.ndarray
    x_scale: np.ndarray
    noise: dict
    spec: dict = field(default_factory=dict, repr=False)

    # -- marginal and regression ------------------------------------------------
    def g(self, t):
        t = np.asarray(t, dtype=float)
        zt = (t - self.x_mean) / self.x_scale
        logdens = -0.5 * np.sum(zt * zt, axis=-1) - np.sum(np.log(self.x_scale)) - 0.5 * self.dx * math.log(2 * math.pi)
        return np.exp(logdens)

    def r(self, t):
        return self.regression(t)

    def m(self, t):
        return self.r(t) * self.g(t)[..., None]

    def sigma(self, t=None):
        """Conditional covariance ``V(Y | X = t)`` (constant in ``t`` for these families)."""
        cov = self.noise["cov"]
        if t is None:
            return cov.copy()
        lead = np.asarray(t).shape[:-1]
        return np.broadcast_to(cov, lead + cov.shape).copy()

    # -- noise cumulants ----------------------------------------------------------
    def _noise_cgf(self, w):
        if self.family == "gaussian_noise":
            return 0.5 * np.einsum("...i,ij,...j->...", w, self.noise["cov"], w)
        if self.family == "bounded_noise":
            return np.sum(_logsinhc(w * self.noise["half_width"]), axis=-1)
        mu, s = self.noise["shift"], self.noise["spread"]
        return np.sum(_logcosh(w * mu) + 0.5 * (w * s) ** 2, axis=-1)

    def _noise_cgf_grad(self, w):
        if self.family == "gaussian_noise":
            return w @ self.noise["cov"].T
        if self.family == "bounded_noise":
            b = self.noise["half_width"]
            return b * _logsinhc_d1(w * b)
        mu, s = self.noise["shift"], self.noise["spread"]
        return mu * np.tanh(w * mu) + w * s * s

    def _noise_cgf_hess(self, w):
        if self.family == "gaussian_noise":
            return np.broadcast_to(self.noise["cov"], w.shape[:-1] + self.noise["cov"].shape)
        if self.family == "bounded_noise":
            b = self.noise["half_width"]
            diag = b * b * _logsinhc_d2(w * b)
        else:
            mu, s = self.noise["shift"], self.noise["spread"]
            th = np.tanh(w * mu)
            diag = mu * mu * (1.0 - th * th) + s * s
        return diag[..., :, None] * np.eye(self.dy)

    def kappa(self, t, w):
        """``log E[exp(<w, Y>) | X = t]``."""
        w = np.asarray(w, dtype=float)
        return np.sum(w * self.r(t), axis=-1) + self._noise_cgf(w)

    def kappa_grad(self, t, w):
        w = np.asarray(w, dtype=float)
        return self.r(t) + self._noise_cgf_grad(w)

    def kappa_hess(self, t, w):
        w = np.asarray(w, dtype=float)
        return self._noise_cgf_hess(w)

    def laplace(self, t, w):
        """``M_t(w) = int exp(<w, y>) f(t, y) dy``."""
        return self.g(t) * np.exp(self.kappa(t, w))

    def laplace_grad(self, t, w):
        return self.laplace(t, w)[..., None] * self.kappa_grad(t, w)

    # -- sampling -----------------------------------------------------------------
    def draw_noise(self, size, rng):
        q = self.dy
        if self.family == "gaussian_noise":
            return rng.standard_normal((size, q)) @ self.noise["chol"].T
        if self.family == "bounded_noise":
            return rng.uniform(-1.0, 1.0, (size, q)) * self.noise["half_width"]
        signs = np.where(rng.random((size, q)) < 0.5, -1.0, 1.0)
        return signs * self.noise["shift"] + rng.standard_normal((size, q)) * self.noise["spread"]

    def draw(self, size, rng):
        """``size`` i.i.d. pairs from ``rng``; returns ``X (size, dx)``, ``Y (size, dy)``."""
        X = self.x_mean + self.x_scale * rng.standard_normal((size, self.dx))
        return X, self.r(X) + self.draw_noise(size, rng)

    def box_prob(self, lo, hi):
        """``P(X in [lo, hi])`` for a box with corner vectors ``lo``, ``hi``."""
        a = (np.asarray(lo, float) - self.x_mean) / self.x_scale
        b = (np.asarray(hi, float) - self.x_mean) / self.x_scale
        upper = a > 0
        # Work in the far tail with survival functions to keep precision.
        pa = np.where(upper, ndtr(-b), ndtr(a))
        pb = np.where(upper, ndtr(-a), ndtr(b))
        return float(np.prod(pb - pa))

    def draw_in_box(self, lo, hi, size, rng):
        """``size`` pairs drawn from the law of ``(X, Y)`` conditioned on ``X in [lo, hi]``."""
        a = (np.asarray(lo, float) - self.x_mean) / self.x_scale
        b = (np.asarray(hi, float) - self.x_mean) / self.x_scale
        upper = a > 0
        pa = np.where(upper, ndtr(-b), ndtr(a))
        pb = np.where(upper, ndtr(-a), ndtr(b))
        u = pa + (pb - pa) * rng.random((size, self.dx))
        zs = np.where(upper, -ndtri(u), ndtri(u))
        zs = np.clip(zs, a, b)
        X = self.x_mean + self.x_scale * zs
        return X, self.r(X) + self.draw_noise(size, rng)

    def to_json(self):
        return dict(self.spec)


def build_model(spec):
    """Validate a model spec (dict or JSON string) and build the :class:`JointModel`.

    Raises
    ------
    ConfigurationError
        On schema violations, non-positive scales or a non-SPD covariance.
    """
    if isinstance(spec, str):
        spec = json.loads(spec)
    import jsonschema

    try:
        jsonschema.validate(spec, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigurationError(f"invalid model spec: {exc.message}") from None
    family = spec["family"]
    d, q = int(spec.get("dx", 1)), int(spec.get("dy", 1))
    x_mean = _as_vector(spec.get("x_mean"), d, "x_mean", 0.0)
    x_scale = _as_vector(spec.get("x_scale"), d, "x_scale", 1.0)
    if np.any(x_scale <= 0):
        raise ConfigurationError("x_scale must be positive")
    regression = _regression(spec.get("regression"), q, d)
    noise = {}
    if family == "gaussian_noise":
        if "cov" in spec:
            cov = np.asarray(spec["cov"], dtype=float)
            if cov.shape != (q, q) or not np.allclose(cov, cov.T):
                raise ConfigurationError("cov must be a symmetric (dy, dy) matrix")
        else:
            sig = _as_vector(spec.get("sigma"), q, "sigma", 1.0)
            if np.any(sig <= 0):
                raise ConfigurationError("sigma must be positive")
            cov = np.diag(sig**2)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ConfigurationError("noise covariance is not positive definite") from None
        noise = {"cov": cov, "chol": chol}
    elif family == "bounded_noise":
        b = _as_vector(spec.get("half_width"), q, "half_width", 1.0)
        if np.any(b <= 0):
            raise ConfigurationError("half_width must be positive (nonempty box)")
        noise = {"half_width": b, "cov": np.diag(b * b / 3.0)}
    else:
        mu = _as_vector(spec.get("shift"), q, "shift", 1.0)
        s = _as_vector(spec.get("spread"), q, "spread", 0.5)
        if np.any(mu < 0) or np.any(s <= 0):
            raise ConfigurationError("shift must be >= 0 and spread > 0")
        noise = {"shift": mu, "spread": s, "cov": np.diag(mu * mu + s * s)}
    for value in noise.values():
        value.setflags(write=False)
    return JointModel(family, d, q, regression, x_mean, x_scale, noise, spec=dict(spec))


def sample(model, n, seed, stream_id=0):
    """Deterministic i.i.d. sample of size ``n`` from stream ``(seed, stream_id)``."""
    if n < 1:
        raise ConfigurationError("sample size must be at least 1")
    return model.draw(int(n), stream(seed, stream_id))


def write_samples_csv(path, X, Y):
    """Write columns ``x_1..x_d, y_1..y_q`` (RFC 4180, '.' decimal separator)."""
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    header = [f"x_{j + 1}" for j in range(X.shape[1])] + [f"y_{j + 1}" for j in range(Y.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in np.hstack([X, Y]):
            writer.writerow([repr(float(v)) for v in row])
