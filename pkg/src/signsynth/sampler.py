"""Ancestral DDPM sampling of latent clips, deterministic per seed."""

import numpy as np

from .errors import SamplingError
from .params import make_rng
from .schedule import posterior_mean
from .unet import denoise_forward


def ddpm_sample(cond, app, params, model, seed, temporal_enabled=True):
    """Iterate the reverse chain from pure noise down to a clean latent.

    Noise is injected with std sqrt(beta_t) at every step except the last.
    Returns the final latent (c_lat, t, h, w).
    """
    cfg = model.cfg
    sched = model.sched
    dcfg = cfg.denoiser()
    shape = (cfg.c_lat,) + cond.shape[1:]
    rng = make_rng("ddpm-sample", seed)
    z = rng.standard_normal(shape)
    for t in range(sched.steps, 0, -1):
        eps_hat, _ = denoise_forward(z, t, cond, app, params, dcfg, temporal_enabled)
        mu = posterior_mean(z, t, eps_hat, sched)
        if t > 1:
            z = mu + np.sqrt(sched.betas[t - 1]) * rng.standard_normal(shape)
        else:
            z = mu
        if not np.isfinite(z).all():
            raise SamplingError(f"non-finite latent at step {t}", step=t)
    return z
