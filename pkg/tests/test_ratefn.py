import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from devrate import (
    BandwidthSchedule,
    ConfigurationError,
    CumulantContext,
    IndeterminateRateError,
    InputError,
    NumericError,
    build_model,
    check_condition_c,
    conjugate,
    eval_lambda_n,
    eval_psi,
    eval_psi_grad,
    kernel_from_spec,
    make_builtin,
    mdp_rate,
    origin_rate,
    phi_limit,
    regression_rate,
)
from devrate import ratefn
from devrate.ratefn import QuadSettings, deviation_rate, indicator_psi, indicator_v0, inner_minimizer_v

from conftest import G0

# Frozen oracles: direct 30-digit mpmath integration in the original variables.
PSI_EPAN_X02 = -0.20118255531948330334  # epanechnikov, x=0.2, (u, v) = (0.3, -0.7)
PSI_SEMIREC = 0.1924247014403654746  # uniform, ad=0.2, x=0, (0.5, 0.3)
PSI_GAUSS = 0.091743108677542416253  # gaussian kernel (untruncated), x=0, (0.4, 0.2)
J_NW_HALF = 0.046876953637133200165  # g(0)(1 - e^{-1/8})
J_SEMIREC_HALF = 0.056371115516024768082
I00_SIGNED = 0.12951950156313257361  # g(0)(sqrt(lam D) - sqrt(lam D'))^2
LAMBDA_1000 = -0.12622766101866289438  # NW, uniform, h=1000^-0.2, (0.5, -0.5)
G_AT_ONE = 0.199471140200716339

MODELS = {
    "gauss": {"family": "gaussian_noise", "regression": "sin", "sigma": 1.0},
    "bounded": {"family": "bounded_noise", "regression": "sin", "half_width": 1.0},
    "symmetric": {"family": "symmetric_y", "regression": "zero", "shift": 1.0, "spread": 0.5},
    "gauss2": {"family": "gaussian_noise", "dx": 2, "dy": 2, "regression": "sin", "cov": [[1.0, 0.3], [0.3, 0.6]]},
}


def _ctx(model="gauss", kernel="uniform", x=0.0, variant="nw", a=None, **kw):
    m = build_model(MODELS[model])
    k = make_builtin(kernel, m.dx)
    return CumulantContext(m, k, np.full(m.dx, x), variant, a, **kw)


ALL_CTX = [
    ("gauss", "uniform", "nw"), ("gauss", "epanechnikov", "nw"), ("gauss", "gaussian", "nw"),
    ("gauss", "fourth_order_signed", "nw"), ("bounded", "epanechnikov", "nw"), ("symmetric", "uniform", "nw"),
    ("gauss", "uniform", "semirec"), ("bounded", "epanechnikov", "semirec"), ("gauss2", "epanechnikov", "nw"),
    ("gauss2", "uniform", "semirec"),
]


@pytest.fixture(scope="module", params=ALL_CTX, ids=lambda p: "-".join(p))
def any_ctx(request):
    model, kernel, variant = request.param
    return _ctx(model, kernel, 0.1, variant, 0.2 if variant == "semirec" else None)


# -- Psi ----------------------------------------------------------------------------------


def test_psi_zero(any_ctx):
    assert eval_psi(any_ctx, np.zeros(any_ctx.q), 0.0) == 0.0


def test_psi_frozen_oracles():
    assert eval_psi(_ctx(kernel="epanechnikov", x=0.2), 0.3, -0.7) == pytest.approx(PSI_EPAN_X02, abs=1e-13)
    assert eval_psi(_ctx(variant="semirec", a=0.2), 0.5, 0.3) == pytest.approx(PSI_SEMIREC, abs=1e-13)
    assert eval_psi(_ctx(kernel="gaussian"), 0.4, 0.2) == pytest.approx(PSI_GAUSS, abs=1e-12)


def test_psi_semirec_against_original_variable_quadrature():
    # Second route: adaptive quadrature directly in s with the s^{-ad} weight (no substitution).
    ctx = _ctx(kernel="epanechnikov", x=0.3, variant="semirec", a=0.35)
    g, r = ctx.g, math.sin(0.3)
    u, v, ad = -0.6, 0.8, 0.35

    def inner(s):
        c = s**ad
        f = lambda z: g * math.expm1(c * 0.75 * (1 - z * z) * (v + u * r) + (c * u * 0.75 * (1 - z * z)) ** 2 / 2)  # noqa: E731
        return s**-ad * quad(f, -1, 1, epsabs=1e-14)[0]

    oracle = quad(inner, 0, 1, epsabs=1e-13, limit=200)[0]
    assert eval_psi(ctx, u, v) == pytest.approx(oracle, abs=1e-10)


@pytest.mark.parametrize("variant,factor", [("nw", 1.0), ("semirec", 1.25)])
def test_psi_far_negative_v(variant, factor):
    ctx = _ctx(variant=variant, a=0.2 if variant == "semirec" else None)
    for v in (-30.0, -45.0, -80.0):
        assert abs(eval_psi(ctx, 0.0, v) + G0 * factor) <= 1e-3


def test_example3_closed_form():
    ctx = _ctx(kernel="fourth_order_signed", x=0.3)
    for u in np.linspace(-2, 2, 10):
        for v in np.linspace(-2, 2, 10):
            assert abs(eval_psi(ctx, u, v) - indicator_psi(ctx, u, v)) <= 1e-8
        assert abs(inner_minimizer_v(ctx, u) - indicator_v0(ctx, u)) <= 1e-6


def test_quadrature_failure_raises():
    ctx = _ctx(kernel="gaussian", quad=QuadSettings(nodes=3, tau_nodes=4))
    with pytest.raises(NumericError) as err:
        eval_psi(ctx, 3.0, 2.0)
    assert err.value.estimate > 0


def test_context_preconditions():
    m = build_model(MODELS["gauss"])
    with pytest.raises(ConfigurationError):
        CumulantContext(m, make_builtin("uniform", 1), np.zeros(1), "semirec", 1.0)
    unverified = kernel_from_spec({"custom": {"intervals": [[-0.5, 0.5, 1.0]]}})
    with pytest.raises(ConfigurationError):
        CumulantContext(m, unverified, np.zeros(1))


# -- gradient -----------------------------------------------------------------------------


def test_gradient_at_zero(any_ctx):
    gu, gv = eval_psi_grad(any_ctx, np.zeros(any_ctx.q), 0.0)
    m = any_ctx.model
    assert gv == pytest.approx(any_ctx.g, rel=1e-11)
    assert np.allclose(gu, m.m(any_ctx.x), rtol=1e-11, atol=1e-13)


def _fd_grad(ctx, w, eps=1e-5):
    out = []
    for e in np.eye(len(w)):
        hi, lo = w + eps * e, w - eps * e
        out.append((ctx.psi(hi) - ctx.psi(lo)) / (2 * eps))
    return np.array(out)


def test_gradient_vs_central_differences(any_ctx):
    rng = np.random.default_rng(4)
    for _ in range(50):
        w = rng.uniform(-1, 1, any_ctx.q + 1)
        gu, gv = eval_psi_grad(any_ctx, w[:-1], w[-1])
        g = np.append(gu, gv)
        assert np.linalg.norm(g - _fd_grad(any_ctx, w)) <= 1e-6 * max(np.linalg.norm(g), 1e-3)


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_gradient_u_odd_for_symmetric_model(u, v):
    ctx = _ctx("symmetric", "fourth_order_signed")
    gp, _ = eval_psi_grad(ctx, u, v)
    gm, _ = eval_psi_grad(ctx, -u, v)
    assert gp[0] == pytest.approx(-gm[0], rel=1e-12, abs=1e-15)


# -- conjugate ---------------------------------------------------------------------------


def test_conjugate_vanishes_at_origin_gradient(any_ctx):
    gu, gv = eval_psi_grad(any_ctx, np.zeros(any_ctx.q), 0.0)
    res = conjugate(any_ctx, gu, gv)
    assert res.status == "converged" and abs(res.value) <= 1e-12
    assert np.linalg.norm(res.maximizer) <= 1e-6


def test_conjugate_origin_prop_constants(nw_ctx, sr_ctx):
    assert conjugate(nw_ctx, [0.0], 0.0).value == pytest.approx(G0, rel=1e-3)
    assert conjugate(sr_ctx, [0.0], 0.0).value == pytest.approx(G0 / 0.8, rel=1e-3)
    assert origin_rate(nw_ctx).value == pytest.approx(G0, rel=1e-15)
    assert origin_rate(_ctx(kernel="gaussian")).status == "diverged_to_infinite"


def test_conjugate_signed_origin():
    ctx = _ctx(kernel="fourth_order_signed")
    res = conjugate(ctx, [0.0], 0.0)
    assert res.status == "converged" and res.value == pytest.approx(I00_SIGNED, rel=1e-9)


@pytest.mark.parametrize("t1", [0.1, -0.7, 3.0])
def test_conjugate_infinite_for_t2_zero(nw_ctx, sr_ctx, t1):
    for ctx in (nw_ctx, sr_ctx):
        res = conjugate(ctx, [t1], 0.0)
        assert res.status == "diverged_to_infinite" and res.value == math.inf
        assert res.certificate["slope"] > 0


def test_conjugate_infinite_for_negative_t2(nw_ctx):
    res = conjugate(nw_ctx, [0.3], -0.1)
    assert res.status == "diverged_to_infinite" and res.certificate["direction"] == [0.0, -1.0]


def test_conjugate_newton_divergence_certificate():
    # Bounded noise: t1/t2 outside (r - b, r + b) is outside the gradient range.
    ctx = _ctx("bounded")
    res = conjugate(ctx, [2.0], 0.5)
    assert res.status == "diverged_to_infinite"
    assert res.certificate["norm"] > 1e6 and res.certificate["directional_derivative"] > 1e-12
    assert conjugate(ctx, [0.45], 0.5).status == "converged"


def test_conjugate_max_iter_is_indeterminate(nw_ctx):
    res = conjugate(nw_ctx, [0.3], 0.2, max_iter=1)
    assert res.status == "max_iter" and math.isnan(res.value)


def test_regression_rate_propagates_indeterminate(nw_ctx, monkeypatch):
    real = ratefn.conjugate
    monkeypatch.setattr(ratefn, "conjugate", lambda *a, **k: real(*a, **{**k, "max_iter": 1}))
    with pytest.raises(IndeterminateRateError):
        regression_rate(nw_ctx, [0.5])


def test_duality_round_trip(any_ctx):
    rng = np.random.default_rng(8)
    for _ in range(10):
        w = rng.normal(size=any_ctx.q + 1)
        w *= rng.uniform(0, 1.5) / np.linalg.norm(w)
        gu, gv = eval_psi_grad(any_ctx, w[:-1], w[-1])
        t = np.append(gu, gv)
        res = conjugate(any_ctx, gu, gv)
        assert res.value == pytest.approx(w @ t - any_ctx.psi(w), abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-1, 1), st.floats(0.05, 1.0))
def test_young_fenchel_and_nonnegativity(u, v, t1, t2):
    ctx = _ctx("gauss", "epanechnikov", 0.1)
    res = conjugate(ctx, [t1], t2)
    assert res.value >= -1e-12
    assert u * t1 + v * t2 <= ctx.psi(np.array([u, v])) + res.value + 1e-8


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.floats(0.05, 0.95))
def test_psi_convexity_margin(ws, gam):
    ctx = _ctx("gauss", "fourth_order_signed", 0.3)
    w1, w2 = np.array(ws[:2]), np.array(ws[2:])
    mix = ctx.psi(gam * w1 + (1 - gam) * w2)
    margin = gam * ctx.psi(w1) + (1 - gam) * ctx.psi(w2) - mix
    assert margin >= -1e-12
    if np.linalg.norm(w1 - w2) > 1e-2:
        assert margin > 0


# -- regression rate ---------------------------------------------------------------------


def test_rate_zero_at_regression(nw_ctx, sr_ctx):
    for ctx in (nw_ctx, sr_ctx):
        rr = regression_rate(ctx, [0.0])
        assert rr.j <= 1e-8 and rr.t_min == pytest.approx(G0, rel=1e-6)


def test_rate_frozen_values(nw_ctx, sr_ctx):
    assert regression_rate(nw_ctx, [0.5]).j == pytest.approx(J_NW_HALF, rel=1e-9)
    assert regression_rate(sr_ctx, [0.5]).j == pytest.approx(J_SEMIREC_HALF, rel=1e-9)


def test_rate_matches_analytic_curve(nw_ctx):
    for s in (-1.5, -0.3, 0.8, 2.0):
        assert regression_rate(nw_ctx, [s]).j == pytest.approx(G0 * -math.expm1(-s * s / 2), rel=1e-8)


def test_rate_against_ratio_dual_route():
    # Independent route: J(s) = sup_u -Psi(u, -u s) (maximised with Brent over the raw cumulant).
    ctx = _ctx("bounded", "epanechnikov", 0.2)
    for s in (0.0, 0.4, 0.9):
        res = minimize_scalar(lambda u: ctx.psi(np.array([u, -u * s])), bracket=(-1, 1), options={"xtol": 1e-12})
        assert regression_rate(ctx, [s]).j == pytest.approx(-res.fun, abs=1e-9)


def test_rate_increasing_along_ray(nw_ctx):
    vals = [regression_rate(nw_ctx, [s]).j for s in (0.5, 1.0, 2.0, 4.0, 8.0)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_rate_equals_jstar_when_finite():
    ctx = _ctx("bounded", "uniform")
    inside = regression_rate(ctx, [0.5])
    assert math.isfinite(inside.jstar) and inside.j == inside.jstar
    outside = regression_rate(ctx, [1.5])
    assert outside.jstar == math.inf and outside.j == pytest.approx(ctx.g, rel=1e-15)


def test_deviation_rate(nw_ctx):
    val, s = deviation_rate(nw_ctx, 0.5)
    assert val == pytest.approx(J_NW_HALF, rel=1e-9) and abs(abs(s[0]) - 0.5) < 1e-12


# -- MDP quantities ------------------------------------------------------------------------


def test_mdp_rate_values(nw_ctx, sr_ctx):
    assert mdp_rate(nw_ctx, [0.0]) == 0.0
    assert mdp_rate(nw_ctx, [1.0]) == pytest.approx(G_AT_ONE, rel=1e-13)
    for v in (-2.0, 0.5, 3.0):
        assert mdp_rate(sr_ctx, [v]) == pytest.approx(1.2 * mdp_rate(nw_ctx, [v]), rel=1e-14)


def test_mdp_matrix_case():
    ctx = _ctx("gauss2", "epanechnikov")
    v = np.array([0.4, -0.9])
    S = np.array([[1.0, 0.3], [0.3, 0.6]])
    expected = ctx.g * v @ np.linalg.solve(S, v) / (2 * 0.36)
    assert mdp_rate(ctx, v) == pytest.approx(expected, rel=1e-12)


def test_mdp_singular_sigma(nw_ctx):
    model = dataclasses.replace(nw_ctx.model, noise={**nw_ctx.model.noise, "cov": np.zeros((1, 1))})
    ctx = CumulantContext(model, nw_ctx.kernel, nw_ctx.x)
    with pytest.raises(InputError):
        mdp_rate(ctx, [1.0])
    with pytest.raises(InputError):
        phi_limit(ctx, [1.0])


def test_phi_duality(nw_ctx, sr_ctx):
    assert phi_limit(nw_ctx, [0.0]) == 0.0
    for ctx in (nw_ctx, sr_ctx):
        for v in (-1.3, 0.4, 2.2):
            res = minimize_scalar(lambda u: -(u * v - phi_limit(ctx, [u])), bracket=(-1, 1))
            assert -res.fun == pytest.approx(mdp_rate(ctx, [v]), abs=1e-10)
    assert phi_limit(sr_ctx, [0.7]) / phi_limit(nw_ctx, [0.7]) == pytest.approx(1 / 1.2, rel=1e-14)


def test_phi_is_second_order_limit_of_psi(nw_ctx):
    # Psi(u, -<u, r> ...) near the origin: the quadratic part along v = -u r(x) is Phi.
    eps = 1e-3
    u = 0.8
    second = (nw_ctx.psi(np.array([eps * u, 0.0])) + nw_ctx.psi(np.array([-eps * u, 0.0]))) / (2 * eps**2)
    # Psi(u, 0) ~ <u, m> + u^2 (Sigma + r^2) g int K^2 / 2; with r(0)=0 this is Phi * g^2.
    assert second == pytest.approx(phi_limit(nw_ctx, [u]) * nw_ctx.g**2, rel=1e-5)


# -- Lambda_n -----------------------------------------------------------------------------


def test_lambda_zero(nw_ctx, sr_ctx, sched):
    for n in (1, 10, 1000):
        assert eval_lambda_n(nw_ctx, [0.0], 0.0, n, sched) == 0.0
        assert eval_lambda_n(sr_ctx, [0.0], 0.0, n, sched) == 0.0


def test_lambda_frozen(nw_ctx, sched):
    assert eval_lambda_n(nw_ctx, [0.5], -0.5, 1000, sched) == pytest.approx(LAMBDA_1000, rel=1e-13)


def test_lambda_converges(nw_ctx, sr_ctx, sched):
    rng = np.random.default_rng(12)
    pts = rng.uniform(-1, 1, (5, 2))
    for ctx, big in ((nw_ctx, 10**6), (sr_ctx, 10**5)):
        err = lambda n: max(abs(eval_lambda_n(ctx, w[:1], w[1], n, sched) - ctx.psi(w)) for w in pts)  # noqa: E731
        assert err(big) < err(10**3)


def test_lambda_schedule_mismatch(sr_ctx):
    with pytest.raises(ConfigurationError):
        eval_lambda_n(sr_ctx, [0.1], 0.1, 10, BandwidthSchedule(1.0, 0.3))


# -- condition (C) ------------------------------------------------------------------------------


def test_condition_c_nonnegative(nw_ctx):
    rep = check_condition_c(nw_ctx, [])
    assert rep.verdict == "pass" and rep.reason == "Example 1"


def test_condition_c_symmetric_signed():
    m = build_model(MODELS["symmetric"])
    k = kernel_from_spec({"custom": {"intervals": [[-0.75, -0.5, -0.5], [-0.5, 0.5, 1.25], [0.5, 0.75, -0.5]]}})
    from devrate import certify

    ctx = CumulantContext(m, certify(k, 2), np.zeros(1))
    rep = check_condition_c(ctx, np.linspace(-1, 1, 9)[:, None])
    assert rep.verdict == "pass" and rep.reason == "Example 2"
    assert rep.grid_min >= rep.i0 - 1e-8


def test_condition_c_signed_indicator_asymmetric():
    ctx = _ctx("gauss", "fourth_order_signed", 0.3)
    rep = check_condition_c(ctx, np.linspace(-1, 1, 9)[:, None])
    assert rep.verdict == "pass" and rep.reason == "Example 3"


def test_condition_c_generic_signed_is_inconclusive():
    m = build_model(MODELS["gauss"])
    k = kernel_from_spec({"custom": {"intervals": [[-0.75, -0.5, -0.5], [-0.5, 0.5, 1.25], [0.5, 0.75, -0.5]]}})
    from devrate import certify

    ctx = CumulantContext(m, certify(k, 2), np.full(1, 0.4))
    rep = check_condition_c(ctx, np.linspace(-1, 1, 5)[:, None])
    assert rep.verdict in ("inconclusive", "fail") and rep.reason == "grid heuristic"


def test_condition_c_closed_form_profile():
    # Psi(u, v0(u)) = 2 sqrt(lam(D) lam(D')) sqrt(M(u) M(-u)) - (lam(D) + lam(D')) g(x)
    from conftest import FOURTH_A, FOURTH_B

    x = 0.3
    ctx = _ctx("gauss", "fourth_order_signed", x)
    lam_d, lam_dp = 2 * FOURTH_A, 2 * (FOURTH_B - FOURTH_A)
    g = math.exp(-x * x / 2) / math.sqrt(2 * math.pi)
    M = lambda u: g * math.exp(u * math.sin(x) + u * u / 2)  # noqa: E731
    for u in np.linspace(-1.5, 1.5, 7):
        closed = 2 * math.sqrt(lam_d * lam_dp) * math.sqrt(M(u) * M(-u)) - (lam_d + lam_dp) * g
        assert eval_psi(ctx, u, indicator_v0(ctx, u)) == pytest.approx(closed, abs=1e-10)
