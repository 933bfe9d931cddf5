"""Central finite-difference verification of analytic gradients.

The checker reports max over coordinates of
``|analytic - central_difference| / max(1, |central_difference|)``
with a default step of 1e-5, the tolerance regime all gradient suites in
this package are pinned to.
"""

import math

import numpy as np

from .errors import NonFiniteError


def _normalize(params):
    if isinstance(params, np.ndarray):
        return {"x": params}, True
    return params, False


def finite_diff_check(fn, params, step=1e-5, value_fn=None, sample=None, seed=0):
    """Compare analytic gradients from ``fn`` against central differences.

    fn(params) -> (scalar value, grads dict matching params).  ``value_fn``
    may supply a cheaper value-only evaluation for the difference quotients.
    ``sample`` caps the number of coordinates checked per tensor (seeded
    choice, without replacement); by default every coordinate is checked.
    Arrays are perturbed in place and restored bit-exactly.
    """
    params, wrapped = _normalize(params)
    if wrapped:
        value, grads = fn(params["x"])
        grads = {"x": grads}
    else:
        value, grads = fn(params)
    if not math.isfinite(value):
        raise NonFiniteError("finite_diff_check: non-finite function value at the base point")

    if value_fn is None:
        if wrapped:
            evaluate = lambda: fn(params["x"])[0]
        else:
            evaluate = lambda: fn(params)[0]
    else:
        if wrapped:
            evaluate = lambda: value_fn(params["x"])
        else:
            evaluate = lambda: value_fn(params)

    worst = 0.0
    for name in sorted(params):
        arr = params[name]
        analytic = np.asarray(grads[name], dtype=np.float64)
        if analytic.shape != arr.shape:
            raise ValueError(f"gradient shape {analytic.shape} != param shape {arr.shape} for {name!r}")
        n = arr.size
        if sample is not None and sample < n:
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, hash_name(name)])))
            coords = np.sort(rng.choice(n, size=sample, replace=False))
        else:
            coords = range(n)
        flat = arr.reshape(-1)
        grad_flat = analytic.reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + step
            f_plus = evaluate()
            flat[i] = orig - step
            f_minus = evaluate()
            flat[i] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise NonFiniteError(f"finite_diff_check: non-finite value while perturbing {name!r}")
            fd = (f_plus - f_minus) / (2.0 * step)
            err = abs(grad_flat[i] - fd) / max(1.0, abs(fd))
            if err > worst:
                worst = err
    return worst


def hash_name(name):
    # Stable across processes, unlike builtin hash() on strings.
    acc = 0
    for ch in name.encode():
        acc = (acc * 131 + ch) % (2**31 - 1)
    return acc
