"""Command-line front end: one JSON config per run, CSV/JSON artifacts, JSON diagnostics on stderr.

Exit codes: 0 success, 1 configuration or input error, 2 numeric failure.
Artifacts are assembled in memory and written only once the whole run has
succeeded.  CSV artifacts start with ``#`` lines carrying the resolved config
and seed, followed by an RFC 4180 table.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from importlib import resources

import numpy as np

from .devlab import ExperimentConfig, run_experiment, run_ldp_curve
from .errors import ConfigurationError, DevrateError, InputError, NumericError
from .estimators import bias_probe
from .kernels import kernel_from_spec, support_measures, verify_order
from .models import build_model
from .ratefn import (
    CumulantContext,
    QuadSettings,
    check_condition_c,
    eval_lambda_n,
    eval_psi,
    mdp_rate,
    phi_limit,
    regression_rate,
)
from .schedules import schedule_from_spec

__all__ = ["main", "SUBCOMMANDS"]

SUBCOMMANDS = ("rate", "mdp", "lambda", "simulate", "verify-kernel", "condition-c", "bias")

_VERBOSITY = {"level": 0}


def _diag(level, event, **fields):
    rank = {"error": 0, "warning": 0, "info": 1, "debug": 2}[level]
    if rank <= _VERBOSITY["level"]:
        record = {"level": level, "event": event, **fields}
        sys.stderr.write(json.dumps(record, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


def _clean(obj):
    """Replace non-finite floats by strings so JSON stays strict."""
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return _clean(obj.item())
    return obj


def _num(v):
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _csv_text(meta, header, rows):
    buf = io.StringIO(newline="")
    for key in ("command", "seed", "config"):
        buf.write(f"# {key}: {json.dumps(_clean(meta[key]), sort_keys=True)}\r\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([c if isinstance(c, str) else (str(c) if isinstance(c, int) else _num(c)) for c in row])
    return buf.getvalue()


def _json_text(meta, payload):
    return json.dumps(_clean({"meta": meta, **payload}), sort_keys=True, indent=2) + "\n"


def _load_config(path):
    if path.startswith("bundled:"):
        name = path.split(":", 1)[1]
        try:
            text = resources.files("devrate.configs").joinpath(name).read_text(encoding="utf-8")
        except (FileNotFoundError, OSError):
            raise ConfigurationError(f"no bundled config named {name!r}") from None
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path!r}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")
    return cfg


def _require(cfg, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigurationError(f"config is missing {missing}")


def _context(cfg):
    _require(cfg, "model", "kernel", "x")
    model = build_model(cfg["model"])
    kernel = kernel_from_spec({"d": model.dx, **cfg["kernel"]})
    variant = cfg.get("variant", "nw")
    a = cfg.get("a")
    if a is None and "schedule" in cfg:
        a = cfg["schedule"].get("a")
    quad = QuadSettings(**cfg.get("quad", {}))
    return CumulantContext(model, kernel, np.asarray(cfg["x"], dtype=float), variant, a, quad)


def _slice_points(ctx, cfg, key):
    """Points listed under ``key`` or a 1-D slice ``center + s * direction``."""
    if key in cfg:
        pts = np.atleast_2d(np.asarray(cfg[key], dtype=float))
        if pts.shape[1] != ctx.q:
            pts = pts.reshape(-1, ctx.q)
        return pts
    sl = cfg.get("slice", {})
    center = sl.get("center", "r(x)")
    if center == "r(x)":
        center = np.atleast_1d(ctx.model.r(ctx.x))
    elif center == "zero":
        center = np.zeros(ctx.q)
    center = np.asarray(center, dtype=float)
    direction = np.asarray(sl.get("direction", [1.0] + [0.0] * (ctx.q - 1)), dtype=float)
    half = float(sl.get("half_width", 1.0))
    count = int(sl.get("points", 21))
    steps = np.linspace(-half, half, count)
    return center + steps[:, None] * direction


# -- subcommands ------------------------------------------------------------------------------


def cmd_rate(cfg, seed):
    ctx = _context(cfg)
    pts = _slice_points(ctx, cfg, "s")
    rows = []
    for s in pts:
        rr = regression_rate(ctx, s)
        _diag("debug", "rate_point", s=s, j=rr.j)
        status = "finite" if math.isfinite(rr.j) else "infinite"
        rows.append([*s, rr.j, rr.jstar, status, rr.t_min])
    at_r = regression_rate(ctx, np.atleast_1d(ctx.model.r(ctx.x)))
    header = [f"s_{j + 1}" for j in range(ctx.q)] + ["value", "jstar", "status", "minimizer_t"]
    summary = {"j_at_r": at_r.to_json(), "i0": at_r.i0, "context": ctx.to_json()}
    return {"rate_curve.csv": ("csv", header, rows), "rate_summary.json": ("json", summary)}


def cmd_mdp(cfg, seed):
    ctx = _context(cfg)
    pts = _slice_points(ctx, cfg, "v") if ("v" in cfg or "slice" in cfg) else _default_mdp_points(ctx)
    rows = [[*v, mdp_rate(ctx, v), phi_limit(ctx, v)] for v in pts]
    header = [f"v_{j + 1}" for j in range(ctx.q)] + ["G", "Phi"]
    return {"mdp_rate.csv": ("csv", header, rows)}


def _default_mdp_points(ctx):
    e = np.zeros(ctx.q)
    e[0] = 1.0
    return np.linspace(-2.0, 2.0, 21)[:, None] * e


def cmd_lambda(cfg, seed):
    ctx = _context(cfg)
    _require(cfg, "schedule", "ns", "points")
    sched = schedule_from_spec({"d": ctx.kernel.dim, **cfg["schedule"]})
    pts = np.atleast_2d(np.asarray(cfg["points"], dtype=float))
    if pts.shape[1] != ctx.q + 1:
        raise ConfigurationError(f"points must be (u_1..u_q, v) with {ctx.q + 1} entries")
    rows = []
    for n in cfg["ns"]:
        for w in pts:
            lam = eval_lambda_n(ctx, w[:-1], w[-1], int(n), sched, nodes=int(cfg.get("lambda_nodes", 16)))
            psi = eval_psi(ctx, w[:-1], w[-1])
            rows.append([int(n), *w, lam, psi, abs(lam - psi)])
    header = ["n"] + [f"u_{j + 1}" for j in range(ctx.q)] + ["v", "lambda_n", "psi", "abs_error"]
    return {"lambda_n.csv": ("csv", header, rows)}


def cmd_simulate(cfg, seed):
    exp = ExperimentConfig.from_json(cfg)
    if seed is not None:
        exp = exp.with_seed(seed)
    out = {}
    if exp.target == "ldp_curve":
        curves = run_ldp_curve(exp)
        for v, c in curves.items():
            out[f"ldp_curve_{v}.csv"] = ("csv", ["n", "h_n", "p_hat", "se", "norm_log"], list(c.csv_rows()))
            for flag in c.flags:
                _diag("warning", "non_monotone", variant=v, detail=flag)
        report = {"curves": {v: c.to_json() for v, c in curves.items()}}
    else:
        report = run_experiment(exp)
    out["report.json"] = ("json", {"target": exp.target, "report": report})
    return out, exp.to_json(), exp.seed


def cmd_verify_kernel(cfg, seed):
    _require(cfg, "kernel")
    kernel = kernel_from_spec(cfg["kernel"])
    p = int(cfg.get("p", kernel.order or 2))
    report = verify_order(kernel, p, float(cfg.get("tol", 1e-10)))
    sm = support_measures(kernel)
    payload = {
        "kernel": kernel.to_json(),
        "integral": kernel.integral(),
        "order_check": report.to_json(),
        "support_measures": {"plus": sm.plus, "minus": sm.minus, "uncertainty": sm.uncertainty},
        "l2_norm_sq": kernel.l2_norm_sq(),
    }
    return {"kernel_report.json": ("json", payload)}


def cmd_condition_c(cfg, seed):
    ctx = _context(cfg)
    grid = cfg.get("grid")
    if grid is None:
        grid = [[s] + [0.0] * (ctx.q - 1) for s in np.linspace(-1.0, 1.0, 9)]
    report = check_condition_c(ctx, grid, float(cfg.get("tol", 1e-8)))
    return {"condition_c.json": ("json", {"report": report.to_json(), "context": ctx.to_json()})}


def cmd_bias(cfg, seed):
    _require(cfg, "model", "kernel", "schedule", "x", "ns")
    model = build_model(cfg["model"])
    kernel = kernel_from_spec({"d": model.dx, **cfg["kernel"]})
    sched = schedule_from_spec({"d": model.dx, **cfg["schedule"]})
    table = bias_probe(model, kernel, sched, np.asarray(cfg["x"], float), cfg["ns"])
    out = {
        "bias.csv": ("csv", ["n", "h_n", "bias_m", "bias_g"], [list(r) for r in table.rows]),
        "bias_summary.json": ("json", {"slope_m": table.slope_m, "slope_g": table.slope_g}),
    }
    return out


_HANDLERS = {
    "rate": cmd_rate,
    "mdp": cmd_mdp,
    "lambda": cmd_lambda,
    "simulate": cmd_simulate,
    "verify-kernel": cmd_verify_kernel,
    "condition-c": cmd_condition_c,
    "bias": cmd_bias,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parser():
    ap = _Parser(prog="devrate", description="Kernel regression deviation rates and Monte Carlo checks.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("config", help="JSON config path, or bundled:<name> for a packaged example")
    ap.add_argument("-o", "--output-dir", default=".", help="directory for artifacts (default: .)")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more diagnostics on stderr")
    return ap


def _write_atomic(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
    except _UsageError as exc:
        _diag("error", "usage_error", message=str(exc))
        return 1
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    _VERBOSITY["level"] = args.verbose
    try:
        cfg = _load_config(args.config)
        result = _HANDLERS[args.subcommand](cfg, args.seed)
        if isinstance(result, tuple):
            artifacts, resolved, seed = result
        else:
            artifacts, resolved = result, cfg
            seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        meta = {"command": args.subcommand, "seed": seed, "config": resolved}
        texts = {}
        for name, spec in artifacts.items():
            if spec[0] == "csv":
                texts[name] = _csv_text(meta, spec[1], spec[2])
            else:
                texts[name] = _json_text(meta, spec[1])
        os.makedirs(args.output_dir, exist_ok=True)
    except (ConfigurationError, InputError) as exc:
        _diag("error", "configuration_error", message=str(exc))
        return 1
    except NumericError as exc:
        _diag("error", "numeric_failure", message=str(exc), estimate=_clean(exc.estimate))
        return 2
    except DevrateError as exc:
        _diag("error", "numeric_failure", message=str(exc), kind=type(exc).__name__)
        return 2
    except (OSError, TypeError, KeyError, ValueError) as exc:
        _diag("error", "configuration_error", message=f"{type(exc).__name__}: {exc}")
        return 1
    for name, text in texts.items():
        _write_atomic(os.path.join(args.output_dir, name), text)
        _diag("info", "wrote", path=os.path.join(args.output_dir, name))
    return 0


if __name__ == "__main__":
    sys.exit(main())
