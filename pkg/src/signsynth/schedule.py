"""Forward-noising schedule and its closed-form identities.

Linear beta ramp over T steps; alpha_bar[t] is the cumulative product of
(1 - beta) and is strictly decreasing.  Step indices are 1-based;
alpha_bar(0) == 1 by convention.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def steps(self):
        return len(self.betas)

    def alpha_bar(self, t):
        if t == 0:
            return 1.0
        return float(self.alpha_bars[t - 1])

    def _check_t(self, t):
        if not 1 <= t <= self.steps:
            raise ShapeError(f"timestep {t} outside 1..{self.steps}")


def make_schedule(steps=1000, beta_start=1e-4, beta_end=0.02):
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(f"betas must satisfy 0 < start <= end < 1, got {beta_start}, {beta_end}")
    betas = np.linspace(beta_start, beta_end, steps)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    if not (np.diff(alpha_bars) < 0.0).all():
        raise ConfigError("alpha_bar must be strictly decreasing")
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def q_sample(z0, t, eps, sched):
    """Noisy latent at step t: sqrt(ab)*z0 + sqrt(1-ab)*eps."""
    sched._check_t(t)
    if eps.shape != z0.shape:
        raise ShapeError(f"noise shape {eps.shape} != latent shape {z0.shape}")
    ab = sched.alpha_bar(t)
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def predict_clean(z_t, t, eps, sched):
    """Invert q_sample given the exact noise: recovers z0 at any t."""
    sched._check_t(t)
    ab = sched.alpha_bar(t)
    return (z_t - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)


def posterior_mean(z_t, t, eps_hat, sched):
    """Ancestral-step mean: (z_t - beta_t/sqrt(1-ab_t) * eps_hat) / sqrt(alpha_t)."""
    sched._check_t(t)
    beta = sched.betas[t - 1]
    ab = sched.alpha_bar(t)
    return (z_t - beta / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(sched.alphas[t - 1])
