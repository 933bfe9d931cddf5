"""AdamW with decoupled weight decay over a named parameter registry."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonFiniteError


@dataclass
class AdamWState:
    lr: float
    weight_decay: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_init(params, names, lr, weight_decay, beta1=0.9, beta2=0.999, eps=1e-8):
    """First and second moments start at zero for every optimized name."""
    if lr < 0.0:
        raise ConfigError(f"lr must be non-negative, got {lr}")
    if weight_decay < 0.0:
        raise ConfigError(f"weight_decay must be non-negative, got {weight_decay}")
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise ConfigError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
    state = AdamWState(lr=lr, weight_decay=weight_decay, beta1=beta1, beta2=beta2, eps=eps)
    for name in names:
        state.m[name] = np.zeros_like(params[name])
        state.v[name] = np.zeros_like(params[name])
    return state


def adamw_step(params, grads, state):
    """One AdamW update in place over the names the state owns.

    Weight decay is decoupled: p <- p - lr*wd*p - lr * m_hat / (sqrt(v_hat) + eps).
    A missing gradient is treated as zero (moments decay, decay still applies).
    """
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name in sorted(state.m):
        p = params[name]
        g = grads.get(name)
        if g is None:
            state.m[name] = state.beta1 * state.m[name]
            state.v[name] = state.beta2 * state.v[name]
        else:
            if not np.isfinite(g).all():
                raise NonFiniteError(f"non-finite gradient for {name!r}")
            state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
            state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        params[name] = p - state.lr * state.weight_decay * p - state.lr * (m_hat / (np.sqrt(v_hat) + state.eps))
    return params, state
