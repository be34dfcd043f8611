import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halfline_hjb.dividend import build_hjb, demo_model
from halfline_hjb.hamiltonian import (
    CoefficientError,
    ControlSet,
    HJBCoefficients,
    evaluate_hamiltonian,
    ham_value,
    probe_growth,
)


def test_control_set_validation():
    with pytest.raises(ValueError):
        ControlSet.interval(1.0, 0.0)
    with pytest.raises(ValueError):
        ControlSet.interval(0.0, np.inf)
    with pytest.raises(ValueError):
        ControlSet.finite([])
    cs = ControlSet.finite([2.0, -1.0, 0.5])
    assert cs.points == (-1.0, 0.5, 2.0)
    assert (cs.lower, cs.upper) == (-1.0, 2.0)
    assert list(cs.contains([0.5, 0.6])) == [True, False]


def test_affine_in_control():
    c = HJBCoefficients(i=lambda x, t, d: d, h=0.0, f=0.0, control_set=ControlSet.interval(-1, 1))
    value, arg = ham_value(c, 3.0, 17.0, 0.5, 0.0)
    assert value == pytest.approx(3.0, abs=1e-12)
    assert arg == pytest.approx(1.0, abs=1e-12)


def test_pure_quadratic():
    c = HJBCoefficients(i=0.0, h=0.0, f=lambda x, t, d: -((d - 0.3) ** 2), control_set=ControlSet.interval(0, 1))
    value, arg = ham_value(c, 0.0, 0.0, 1.0, 0.0)
    assert value == pytest.approx(0.0, abs=1e-15)
    assert arg == pytest.approx(0.3, abs=1e-9)


def test_concave_objective_against_dense_scan():
    c = HJBCoefficients(i=lambda x, t, d: -d, h=0.0, f=lambda x, t, d: np.sqrt(d), control_set=ControlSet.interval(0, 2))
    value, arg = ham_value(c, 1.0, 0.0, 0.0, 0.0)
    scan = np.linspace(0.0, 2.0, 1_000_001)
    obj = -scan + np.sqrt(scan)
    assert value == pytest.approx(obj.max(), abs=1e-12)
    assert value == pytest.approx(0.25, abs=1e-15)
    assert arg == pytest.approx(scan[np.argmax(obj)], abs=2e-6)
    assert arg == pytest.approx(0.25, abs=1e-8)


def test_ties_go_to_smallest_control():
    flat = HJBCoefficients(i=0.0, h=0.0, f=0.0, control_set=ControlSet.interval(-2, 3))
    assert ham_value(flat, 1.0, 1.0, 1.0, 0.0) == (0.0, -2.0)
    finite = HJBCoefficients(i=lambda x, t, d: d**2, h=0.0, f=0.0, control_set=ControlSet.finite([1.0, -1.0, 0.0]))
    assert ham_value(finite, 1.0, 0.0, 0.0, 0.0) == (1.0, -1.0)


def test_singleton_and_finite_sets():
    single = HJBCoefficients(i=1.0, h=0.0, f=0.0, control_set=ControlSet.interval(0.7, 0.7))
    assert ham_value(single, 2.5, 0.0, 0.0, 0.0) == (2.5, 0.7)
    finite = HJBCoefficients(i=lambda x, t, d: d, h=0.0, f=lambda x, t, d: -(d**2), control_set=ControlSet.finite([0, 1, 2, 3]))
    value, arg = ham_value(finite, np.array([0.0, 2.9, 10.0]), 0.0, 0.0, 0.0)
    np.testing.assert_array_equal(arg, [0.0, 1.0, 3.0])
    np.testing.assert_allclose(value, [0.0, 1.9, 21.0])


def test_multimodal_objective_finds_global_maximum():
    # local maximum near 0.1, global one near 0.8
    f = lambda x, t, d: np.exp(-((d - 0.1) ** 2) / 0.001) + 1.5 * np.exp(-((d - 0.8) ** 2) / 0.002)
    c = HJBCoefficients(i=0.0, h=0.0, f=f, control_set=ControlSet.interval(0, 1))
    value, arg = ham_value(c, 0.0, 0.0, 0.0, 0.0)
    assert arg == pytest.approx(0.8, abs=1e-6)
    assert value == pytest.approx(1.5, rel=1e-9)


def test_non_finite_coefficient_is_reported_with_location():
    c = HJBCoefficients(i=0.0, h=0.0, f=lambda x, t, d: np.log(d - 0.5 + 0 * x), control_set=ControlSet.interval(0, 1))
    with np.errstate(all="ignore"), pytest.raises(CoefficientError, match=r"x=2, t=0.5, delta=0"):
        ham_value(c, 0.0, 0.0, 2.0, 0.5)


def test_vectorized_over_large_blocks():
    c = HJBCoefficients(i=lambda x, t, d: -d, h=0.0, f=lambda x, t, d: np.sqrt(d), control_set=ControlSet.interval(0, 2))
    p = np.linspace(0.2, 3.0, 40_000)
    value, arg = ham_value(c, p, 0.0, 0.0, 0.0)
    np.testing.assert_allclose(arg, np.minimum(1.0 / (4 * p**2), 2.0), atol=1e-8)
    assert value.shape == p.shape


def test_probe_growth_examples():
    zero = HJBCoefficients(i=0.0, h=0.0, f=0.0, control_set=ControlSet.interval(0, 1))
    assert probe_growth(zero) == 0.0
    identity = HJBCoefficients(i=1.0, h=0.0, f=0.0, control_set=ControlSet.interval(0.0, 0.0))
    assert probe_growth(identity) == pytest.approx(1.0, abs=1e-12)
    assert probe_growth(lambda p, u, x, t: p) == pytest.approx(1.0, abs=1e-12)


def test_probe_growth_dividend_regression():
    # g = 0.5, U = sqrt(c), r = 0.05, D = [0, 2]; the Lipschitz constant in p is
    # sup |g - c| = 1.5, which dominates the growth ratio
    ham = build_hjb(demo_model()).hamiltonian
    K = probe_growth(ham, sample_count=20_000, seed=3)
    assert K == pytest.approx(1.5, abs=5e-3)
    assert K <= 1.5 + 1e-9


coef_values = st.floats(-3.0, 3.0)


def _random_coeffs(a, b, c, d, lo, width):
    return HJBCoefficients(
        i=lambda x, t, s: a + b * s,
        h=lambda x, t, s: c * np.cos(s),
        f=lambda x, t, s: d * np.sin(3 * s),
        control_set=ControlSet.interval(lo, lo + width),
    )


@settings(max_examples=60, deadline=None)
@given(coef_values, coef_values, coef_values, coef_values, st.floats(-2, 2), st.floats(0.0, 3.0), st.integers(0, 2**31 - 1))
def test_convex_in_p(a, b, c, d, lo, width, seed):
    coeffs = _random_coeffs(a, b, c, d, lo, width)
    rng = np.random.default_rng(seed)
    p1, p2 = rng.uniform(-5, 5, 20), rng.uniform(-5, 5, 20)
    u, x = rng.uniform(-5, 5, 20), rng.uniform(0, 5, 20)
    h = lambda p: evaluate_hamiltonian(coeffs, p, u, x, 0.0)[0]
    assert np.all(h(0.5 * (p1 + p2)) <= 0.5 * (h(p1) + h(p2)) + 1e-9)


@settings(max_examples=60, deadline=None)
@given(coef_values, coef_values, coef_values, coef_values, st.floats(-2, 2), st.floats(0.0, 3.0), st.integers(0, 2**31 - 1))
def test_lipschitz_in_p_and_u(a, b, c, d, lo, width, seed):
    coeffs = _random_coeffs(a, b, c, d, lo, width)
    s = np.linspace(lo, lo + width, 2001)
    # include the critical point of cos so the probed sup is exact
    s = np.append(s, np.clip(0.0, lo, lo + width))
    sup_i = np.max(np.abs(a + b * s))
    sup_h = np.max(np.abs(c * np.cos(s)))
    rng = np.random.default_rng(seed)
    p1, p2, u1, u2 = (rng.uniform(-5, 5, 20) for _ in range(4))
    x = rng.uniform(0, 5, 20)
    h = lambda p, u: evaluate_hamiltonian(coeffs, p, u, x, 0.0)[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        qp = np.abs(h(p1, u1) - h(p2, u1)) / np.abs(p1 - p2)
        qu = np.abs(h(p1, u1) - h(p1, u2)) / np.abs(u1 - u2)
    assert np.all(np.nan_to_num(qp) <= sup_i + 1e-9)
    assert np.all(np.nan_to_num(qu) <= sup_h + 1e-9)


@settings(max_examples=60, deadline=None)
@given(coef_values, coef_values, coef_values, coef_values, st.floats(-2, 2), st.floats(0.0, 3.0), st.sampled_from([0.25, 2.0, 8.0]))
def test_positive_scaling(a, b, c, d, lo, width, scale):
    coeffs = _random_coeffs(a, b, c, d, lo, width)
    scaled = HJBCoefficients(
        i=lambda x, t, s: scale * coeffs.i(x, t, s),
        h=lambda x, t, s: scale * coeffs.h(x, t, s),
        f=lambda x, t, s: scale * coeffs.f(x, t, s),
        control_set=coeffs.control_set,
    )
    p = np.linspace(-3, 3, 7)
    v1, a1 = ham_value(coeffs, p, 1.0, 0.5, 0.0)
    v2, a2 = ham_value(scaled, p, 1.0, 0.5, 0.0)
    np.testing.assert_allclose(v2, scale * v1, rtol=1e-12, atol=1e-12)
    # powers of two scale every term exactly, so the search path is identical
    np.testing.assert_array_equal(a2, a1)
