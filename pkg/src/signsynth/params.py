"""Flat named registry of float64 parameter tensors plus seeding helpers.

Parameters live in a plain ``dict[str, np.ndarray]``; gradients use a
parallel dict with the same keys.  All random draws go through
``make_rng`` so any tensor can be regenerated from its structured key.
"""

import hashlib
import math

import numpy as np

from . import sgt1


def _as_entropy(part):
    if isinstance(part, (bool, float)):
        raise TypeError(f"rng key parts must be int or str, got {type(part).__name__}")
    if isinstance(part, (int, np.integer)):
        return int(part) & 0x7FFFFFFFFFFFFFFF
    if isinstance(part, str):
        return int.from_bytes(hashlib.sha256(part.encode()).digest()[:8], "little")
    raise TypeError(f"rng key parts must be int or str, got {type(part).__name__}")


def make_rng(*key):
    """Deterministic Generator derived from a structured key of ints/strings."""
    entropy = [_as_entropy(part) for part in key]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def uniform_init(rng, shape, fan_in):
    """Zero-mean uniform init scaled by 1/sqrt(fan_in)."""
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def clone_params(params):
    return {name: arr.copy() for name, arr in params.items()}


def add_grad(grads, name, g):
    """Accumulate a gradient contribution under a parameter name."""
    if name in grads:
        grads[name] = grads[name] + g
    else:
        grads[name] = np.array(g, dtype=np.float64, copy=True)


def names_with_prefix(params, prefix):
    return sorted(name for name in params if name.startswith(prefix))


def save_params(dirpath, params):
    sgt1.write_tensor_dir(dirpath, params)


def load_params(dirpath):
    return sgt1.read_tensor_dir(dirpath)
