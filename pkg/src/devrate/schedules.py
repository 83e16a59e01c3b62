"""Bandwidth sequences ``h_n = c n^{-a} L(n)`` and the exponent arithmetic of speed conditions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DivergenceError

__all__ = [
    "SCHEDULE_SCHEMA",
    "BandwidthSchedule",
    "SpeedSequence",
    "SpeedReport",
    "hn",
    "regvar_sum",
    "check_speed",
    "schedule_from_spec",
]

SCHEDULE_SCHEMA = {
    "type": "object",
    "properties": {
        "c": {"type": "number", "exclusiveMinimum": 0},
        "a": {"type": "number", "minimum": 0},
        "d": {"type": "integer", "minimum": 1},
        "sv": {
            "oneOf": [
                {"const": "none"},
                {"type": "object", "properties": {"log_power": {"type": "number"}}, "required": ["log_power"]},
            ]
        },
    },
    "required": ["c", "a"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class BandwidthSchedule:
    """``h_n = c * n**(-a) * max(1, log n)**log_power``.

    ``a = 0`` gives a frozen (constant) bandwidth; it is accepted for
    degenerate comparisons but fails the ``h_n -> 0`` check.
    """

    c: float = 1.0
    a: float = 0.2
    d: int = 1
    log_power: float | None = None

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigurationError("bandwidth constant c must be positive")
        if self.d < 1:
            raise ConfigurationError("dimension d must be >= 1")
        if not (0.0 <= self.a < 1.0 / self.d):
            raise ConfigurationError(f"exponent a must lie in [0, 1/d) = [0, {1.0 / self.d}), got {self.a}")

    def __call__(self, n):
        return hn(self, n)

    @property
    def nonincreasing(self):
        return self.log_power is None or self.log_power <= 0

    def sup_ratio(self, n):
        """``max_{i <= n} h_n / h_i``; equals 1 for nonincreasing schedules."""
        n = int(n)
        return float(hn(self, n) / np.min(hn(self, np.arange(1, n + 1))))

    def to_json(self):
        sv = "none" if self.log_power is None else {"log_power": self.log_power}
        return {"c": self.c, "a": self.a, "d": self.d, "sv": sv}


def schedule_from_spec(spec, d=None):
    import jsonschema

    try:
        jsonschema.validate(spec, SCHEDULE_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigurationError(f"invalid schedule spec: {exc.message}") from None
    sv = spec.get("sv", "none")
    log_power = None if sv == "none" else float(sv["log_power"])
    return BandwidthSchedule(float(spec["c"]), float(spec["a"]), int(spec.get("d", d or 1)), log_power)


def hn(s, n):
    """Bandwidth at (possibly real or array-valued) index ``n >= 1``."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 1):
        raise ConfigurationError("bandwidth index must be >= 1")
    h = s.c * n ** (-s.a)
    if s.log_power is not None:
        h = h * np.maximum(1.0, np.log(n)) ** s.log_power
    return float(h) if h.ndim == 0 else h


def regvar_sum(s, beta, n):
    """``(1 / (n h_n^beta)) * sum_{i<=n} h_i^beta``; tends to ``1 / (1 - a beta)``.

    Raises
    ------
    DivergenceError
        If ``a * beta >= 1`` (the normalised sum has no finite limit).
    """
    if s.a * beta >= 1:
        raise DivergenceError(f"a*beta = {s.a * beta} >= 1: normalised sum diverges")
    n = int(n)
    if beta == 0:
        return 1.0
    total = 0.0
    chunk = 1 << 20
    for start in range(1, n + 1, chunk):
        idx = np.arange(start, min(start + chunk, n + 1), dtype=float)
        total += float(np.sum(hn(s, idx) ** beta))
    return total / (n * hn(s, n) ** beta)


@dataclass(frozen=True)
class SpeedSequence:
    """``v_n = n**gamma``."""

    gamma: float

    def __call__(self, n):
        return np.asarray(n, dtype=float) ** self.gamma


@dataclass(frozen=True)
class SpeedReport:
    feasible: tuple
    checks: dict
    passed: bool | None

    def to_json(self):
        return {"feasible_gamma": list(self.feasible), "checks": self.checks, "pass": self.passed}


def _vanishes(power, log_power):
    # n^power * (log n)^log_power -> 0 ?
    return power < 0 or (power == 0 and log_power < 0)


def _diverges(power, log_power):
    return power > 0 or (power == 0 and log_power > 0)


def check_speed(s, v=None, p=2):
    """Decide the speed conditions from exponents.

    With ``h_n = c n^{-a} (log n)^b`` and ``v_n = n^gamma`` the conditions
    ``h_n -> 0``, ``n h_n^d -> infinity``, ``v_n -> infinity``,
    ``v_n^2 / (n h_n^d) -> 0`` and ``v_n h_n^p -> 0`` reduce to comparisons
    of exponents (the log power breaks ties).  Returns the feasible open
    interval of ``gamma`` (empty when ``lo >= hi``) and, if ``v`` is given,
    which conditions hold.
    """
    a, d, b = s.a, s.d, (s.log_power or 0.0)
    lo, hi = 0.0, min((1.0 - a * d) / 2.0, a * p)
    checks = {
        "h_to_zero": _vanishes(-a, b),
        "n_hd_to_infinity": _diverges(1.0 - a * d, b * d),
    }
    passed = None
    if v is not None:
        g = v.gamma
        checks["v_to_infinity"] = g > 0
        checks["v2_over_nhd_to_zero"] = _vanishes(2 * g - 1.0 + a * d, -b * d)
        checks["v_hp_to_zero"] = _vanishes(g - a * p, b * p)
        passed = all(checks.values())
    feasible = (lo, hi) if lo < hi else ()
    if math.isclose(lo, hi):
        feasible = ()
    return SpeedReport(feasible, checks, passed)
