import math

import numpy as np
import pytest
from scipy.special import erf

from devrate import ConfigurationError, Kernel, certify, kernel_from_spec, make_builtin, support_measures, verify_order
from devrate.errors import NumericError
from devrate.kernels import GAUSSIAN_CUTOFF, from_callable, fourth_order_constants

from conftest import FOURTH_A, FOURTH_B

BUILTINS = [("uniform", 1), ("uniform", 2), ("epanechnikov", 1), ("epanechnikov", 2),
            ("gaussian", 1), ("gaussian", 2), ("fourth_order_signed", 1)]


def test_uniform_metadata():
    k = make_builtin("uniform", 1)
    assert k(0.0) == 1.0
    assert k(0.49) == 1.0 and k(0.51) == 0.0
    assert (k.lambda_splus, k.lambda_sminus) == (1.0, 0.0)
    assert k.support_radius == 0.5 and k.order == 2


def test_fourth_order_constants_match_cube_root_expressions():
    a, b = fourth_order_constants()
    assert a == pytest.approx(FOURTH_A, abs=1e-12)
    assert b == pytest.approx(FOURTH_B, abs=1e-12)
    assert round(a, 4) == 0.6756 and round(b, 4) == 0.8512


def test_fourth_order_indicator_structure(fourth):
    a, b = fourth_order_constants()
    z = np.linspace(-1.0, 1.0, 20001)
    vals = fourth(z)
    inside = np.abs(z) <= a
    outer = (np.abs(z) > a) & (np.abs(z) <= b)
    assert np.all(vals[inside] == 1.0)
    assert np.all(vals[outer] == -1.0)
    assert np.all(vals[np.abs(z) > b] == 0.0)
    assert fourth.lambda_D - fourth.lambda_Dprime == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("name,d", BUILTINS)
def test_builtin_integrates_to_one(name, d):
    k = make_builtin(name, d)
    assert abs(k.integral() - 1.0) <= 1e-8


def test_gaussian_2d_against_erf_oracle():
    # Exact mass of the truncated square: erf(R/sqrt 2)^2.
    k = make_builtin("gaussian", 2)
    exact = erf(GAUSSIAN_CUTOFF / math.sqrt(2.0)) ** 2
    assert k.integral() == pytest.approx(exact, abs=1e-13)
    assert abs(k.integral() - 1.0) <= 1e-8


@pytest.mark.parametrize("name,d", BUILTINS)
def test_sup_norm_and_sign_metadata_on_dense_grid(name, d):
    k = make_builtin(name, d)
    R = k.box_radius
    side = int(round(10_000 ** (1.0 / d)))
    axes = [np.linspace(-R, R, side)] * d
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    vals = k(pts)
    assert np.max(np.abs(vals)) <= k.sup_norm + 1e-15
    if k.lambda_sminus == 0:
        assert np.all(vals >= 0)
    else:
        assert np.any(vals < 0)


def test_unsupported_combination():
    with pytest.raises(ConfigurationError):
        make_builtin("fourth_order_signed", 2)
    with pytest.raises(ConfigurationError):
        make_builtin("triweight", 1)


def test_verify_order_uniform_p2():
    rep = verify_order(make_builtin("uniform", 1), 2)
    assert rep.passed and abs(rep.moments[0, 0]) <= 1e-15


def _interval_moment(lo, hi, s):
    return (hi ** (s + 1) - lo ** (s + 1)) / (s + 1)


def test_verify_order_fourth_order_against_closed_form(fourth):
    a, b = fourth_order_constants()
    rep = verify_order(fourth, 4, tol=1e-10)
    assert rep.passed
    for s in (1, 2, 3):
        exact = _interval_moment(-a, a, s) - _interval_moment(-b, -a, s) - _interval_moment(a, b, s)
        assert abs(exact) <= 1e-14
        assert rep.moments[0, s - 1] == pytest.approx(exact, abs=1e-12)
    assert np.all(np.abs(rep.moments) <= 1e-10)


def test_verify_order_epanechnikov_fails_at_p4():
    rep = verify_order(make_builtin("epanechnikov", 1), 4)
    assert not rep.passed
    assert rep.moments[0, 1] == pytest.approx(0.2, abs=1e-12)  # int y^2 (3/4)(1 - y^2) dy = 1/5


def test_verify_order_tensor_kernel():
    rep = verify_order(make_builtin("epanechnikov", 2), 2)
    assert rep.passed and rep.moments.shape == (2, 1)


def test_verify_order_unresolved_quadrature_raises():
    # A kink inside the panel defeats the panel-wise Gauss rule.
    func = lambda z: np.where(np.abs(z[:, 0] - 0.123) < 0.3, 1.0 / 0.6, 0.0)  # noqa: E731
    k = Kernel("kinked", 1, func, (-1.0, 1.0), 1.0, 1.0 / 0.6, None, 0.6, 0.0)
    with pytest.raises(NumericError):
        verify_order(k, 2, tol=1e-12)


def test_support_measures():
    assert tuple(support_measures(make_builtin("uniform", 1)))[:2] == (1.0, 0.0)
    sm = support_measures(make_builtin("fourth_order_signed", 1))
    a, b = fourth_order_constants()
    assert sm.plus == pytest.approx(2 * a, abs=1e-15) and sm.minus == pytest.approx(2 * (b - a), abs=1e-15)
    assert sm.plus - sm.minus == pytest.approx(1.0, abs=1e-12)
    g = support_measures(make_builtin("gaussian", 1))
    assert g.plus == math.inf and g.minus == 0.0


def test_support_measures_user_kernels():
    tab = kernel_from_spec({"custom": {"tabulated": {"z": [-1.0, 0.0, 1.0], "k": [0.0, 1.0, 0.0]}}})
    sm = support_measures(tab)
    assert sm.plus == pytest.approx(2.0) and sm.minus == 0.0
    k = from_callable(lambda z: 0.75 * np.clip(1 - z[:, 0] ** 2, 0, None), 1, 1.0)
    sm = support_measures(k)
    assert abs(sm.plus - 2.0) <= max(sm.uncertainty, 1e-6)


def test_custom_kernels_flagged_until_certified():
    k = kernel_from_spec({"custom": {"intervals": [[-0.5, 0.5, 1.0]]}})
    assert not k.verified
    ck = certify(k, 2)
    assert ck.verified
    with pytest.raises(ConfigurationError):
        certify(k, 4)


def test_custom_kernel_must_normalise():
    with pytest.raises(ConfigurationError):
        kernel_from_spec({"custom": {"intervals": [[-0.5, 0.5, 2.0]]}})


def test_json_round_trip():
    k = make_builtin("epanechnikov", 2)
    k2 = kernel_from_spec(k.to_json())
    z = np.random.default_rng(0).uniform(-1, 1, (50, 2))
    assert np.array_equal(k(z), k2(z))
