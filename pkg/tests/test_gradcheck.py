import numpy as np
import pytest

from signsynth.errors import NonFiniteError
from signsynth.gradcheck import finite_diff_check


def quadratic(coeffs):
    def fn(params):
        value = 0.0
        grads = {}
        for name, p in params.items():
            value += float(np.sum(coeffs[name] * p * p))
            grads[name] = 2.0 * coeffs[name] * p
        return value, grads

    return fn


def test_quadratic_is_clean(rng):
    params = {"a": rng.standard_normal((3, 4)), "b": rng.standard_normal(5)}
    coeffs = {"a": rng.standard_normal((3, 4)), "b": rng.standard_normal(5)}
    assert finite_diff_check(quadratic(coeffs), params) < 1e-9


def test_detects_corrupted_gradient(rng):
    params = {"a": rng.standard_normal(6) + 3.0}
    coeffs = {"a": np.ones(6)}
    base = quadratic(coeffs)

    def corrupted(p):
        value, grads = base(p)
        grads["a"] = grads["a"] * 1.001
        return value, grads

    assert finite_diff_check(corrupted, params) > 1e-4


def test_accepts_bare_array(rng):
    x = rng.standard_normal(4)

    def fn(p):
        return float(np.sum(p ** 2)), 2.0 * p

    assert finite_diff_check(fn, x) < 1e-9


def test_sampled_coordinates_deterministic(rng):
    params = {"a": rng.standard_normal(50)}
    coeffs = {"a": rng.standard_normal(50)}
    e1 = finite_diff_check(quadratic(coeffs), params, sample=5, seed=9)
    e2 = finite_diff_check(quadratic(coeffs), params, sample=5, seed=9)
    assert e1 == e2 < 1e-9


def test_non_finite_value_raises():
    def fn(params):
        return float("nan"), {"x": np.zeros(2)}

    with pytest.raises(NonFiniteError):
        finite_diff_check(fn, {"x": np.zeros(2)})
