"""Compact conditional U-Net denoiser over latent clips.

Two resolution levels.  Spatial convs use (1, 3, 3) kernels so frames never
mix except through the optional per-channel temporal convs (kernel 3 along
t, identity-initialised), which phase 2 trains exclusively.  The condition
stream is injected additively after the first conv of each resolution
level on the way down; a learned per-step embedding and the global
appearance vector are added per block.

The trunk regresses an estimate of the clean latent; the returned noise
prediction is derived from it through the schedule identity
eps_hat = (z_t - sqrt(abar_t) * estimate) / sqrt(1 - abar_t).  This keeps
the high-noise passthrough exact regardless of trunk width, so training
effort goes into the clip content rather than reproducing input noise.
"""

from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ShapeError
from .params import add_grad, uniform_init
from .schedule import make_schedule


@dataclass(frozen=True)
class DenoiserConfig:
    c_lat: int
    c_cond: int
    base: int
    d_time: int
    c_app: int
    timesteps: int
    beta_start: float = 1e-4
    beta_end: float = 0.02


_SCHED_CACHE = {}


def _head_coeffs(cfg, t):
    """(sqrt(abar_t), sqrt(1-abar_t)) for the noise-prediction head."""
    key = (cfg.timesteps, cfg.beta_start, cfg.beta_end)
    sched = _SCHED_CACHE.get(key)
    if sched is None:
        sched = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
        _SCHED_CACHE[key] = sched
    ab = sched.alpha_bars[t - 1]
    return np.sqrt(ab), np.sqrt(1.0 - ab)


def _blocks(cfg):
    b = cfg.base
    # name, c_in, c_out, injects_condition
    return (
        ("down0", b, b, True),
        ("down1", b, 2 * b, True),
        ("mid", 2 * b, 2 * b, False),
        ("up1", 4 * b, 2 * b, False),
        ("up0", 3 * b, b, False),
    )


def init_denoiser_params(params, cfg, rng):
    def conv(c_out, c_in):
        return uniform_init(rng, (c_out, c_in, 1, 3, 3), c_in * 9)

    params["unet.in.kernel"] = conv(cfg.base, cfg.c_lat)
    params["unet.in.bias"] = np.zeros(cfg.base)
    for name, c_in, c_out, injects in _blocks(cfg):
        params[f"unet.{name}.conv1.kernel"] = conv(c_out, c_in)
        params[f"unet.{name}.conv1.bias"] = np.zeros(c_out)
        params[f"unet.{name}.conv2.kernel"] = conv(c_out, c_out)
        params[f"unet.{name}.conv2.bias"] = np.zeros(c_out)
        params[f"unet.{name}.time.weight"] = uniform_init(rng, (c_out, cfg.d_time), cfg.d_time)
        params[f"unet.{name}.app.weight"] = uniform_init(rng, (c_out, cfg.c_app), cfg.c_app)
        if injects:
            params[f"unet.{name}.cond.weight"] = uniform_init(rng, (c_out, cfg.c_cond), cfg.c_cond)
        if c_in != c_out:
            params[f"unet.{name}.skip.weight"] = uniform_init(rng, (c_out, c_in), c_in)
        # Temporal layers open as the identity so spatial training is frame-exact.
        w = np.zeros((c_out, 3))
        w[:, 1] = 1.0
        params[f"unet.temporal.{name}.weight"] = w
        params[f"unet.temporal.{name}.bias"] = np.zeros(c_out)
    params["unet.down.kernel"] = conv(cfg.base, cfg.base)
    params["unet.down.bias"] = np.zeros(cfg.base)
    params["unet.up.kernel"] = conv(2 * cfg.base, 2 * cfg.base)
    params["unet.up.bias"] = np.zeros(2 * cfg.base)
    params["unet.out.kernel"] = conv(cfg.c_lat, cfg.base)
    params["unet.out.bias"] = np.zeros(cfg.c_lat)
    params["unet.time_table"] = uniform_init(rng, (cfg.timesteps, cfg.d_time), cfg.d_time)
    return params


def temporal_param_names(params):
    return sorted(n for n in params if n.startswith("unet.temporal."))


def _block_forward(x, name, cond_r, temb, app, params, cfg):
    c_in = x.shape[0]
    h1 = ops.conv3d(x, params[f"unet.{name}.conv1.kernel"], params[f"unet.{name}.conv1.bias"], padding=(0, 1, 1))
    if cond_r is not None:
        h1 = h1 + np.tensordot(params[f"unet.{name}.cond.weight"], cond_r, axes=1)
    shift = params[f"unet.{name}.time.weight"] @ temb + params[f"unet.{name}.app.weight"] @ app
    h1 = h1 + shift[:, None, None, None]
    r = ops.relu(h1)
    h2 = ops.conv3d(r, params[f"unet.{name}.conv2.kernel"], params[f"unet.{name}.conv2.bias"], padding=(0, 1, 1))
    skip_w = params.get(f"unet.{name}.skip.weight")
    sk = x if skip_w is None else np.tensordot(skip_w, x, axes=1)
    out = h2 + sk
    cache = {"x": x, "h1": h1, "r": r, "cond_r": cond_r, "c_in": c_in}
    return out, cache


def _block_backward(g, name, cache, temb, app, params, grads):
    g_h2 = g
    g_r, gk2, gb2 = ops.conv3d_backward(
        g_h2, cache["r"], params[f"unet.{name}.conv2.kernel"], padding=(0, 1, 1)
    )
    add_grad(grads, f"unet.{name}.conv2.kernel", gk2)
    add_grad(grads, f"unet.{name}.conv2.bias", gb2)
    g_h1 = ops.relu_backward(g_r, cache["h1"])

    g_sum = g_h1.sum(axis=(1, 2, 3))
    add_grad(grads, f"unet.{name}.time.weight", np.outer(g_sum, temb))
    add_grad(grads, f"unet.{name}.app.weight", np.outer(g_sum, app))
    g_temb = params[f"unet.{name}.time.weight"].T @ g_sum
    g_app = params[f"unet.{name}.app.weight"].T @ g_sum

    g_cond_r = None
    if cache["cond_r"] is not None:
        w_cond = params[f"unet.{name}.cond.weight"]
        c_out = w_cond.shape[0]
        add_grad(
            grads,
            f"unet.{name}.cond.weight",
            g_h1.reshape(c_out, -1) @ cache["cond_r"].reshape(w_cond.shape[1], -1).T,
        )
        g_cond_r = np.tensordot(w_cond.T, g_h1, axes=1)

    g_x, gk1, gb1 = ops.conv3d_backward(
        g_h1, cache["x"], params[f"unet.{name}.conv1.kernel"], padding=(0, 1, 1)
    )
    add_grad(grads, f"unet.{name}.conv1.kernel", gk1)
    add_grad(grads, f"unet.{name}.conv1.bias", gb1)

    skip_w = params.get(f"unet.{name}.skip.weight")
    if skip_w is None:
        g_x = g_x + g
    else:
        add_grad(grads, f"unet.{name}.skip.weight", g.reshape(g.shape[0], -1) @ cache["x"].reshape(cache["c_in"], -1).T)
        g_x = g_x + np.tensordot(skip_w.T, g, axes=1)
    return g_x, g_cond_r, g_temb, g_app


def _temporal_forward(x, name, params, enabled):
    if not enabled:
        return x, None
    y = ops.temporal_conv(x, params[f"unet.temporal.{name}.weight"], params[f"unet.temporal.{name}.bias"])
    return y, x


def _temporal_backward(g, name, x, params, grads, enabled):
    if not enabled:
        return g
    g_x, gw, gb = ops.temporal_conv_backward(g, x, params[f"unet.temporal.{name}.weight"])
    add_grad(grads, f"unet.temporal.{name}.weight", gw)
    add_grad(grads, f"unet.temporal.{name}.bias", gb)
    return g_x


def denoise_forward(z_t, t, cond, app, params, cfg, temporal_enabled=False):
    """Predict the noise component of z_t; returns (eps_hat, cache)."""
    if not 1 <= t <= cfg.timesteps:
        raise ShapeError(f"timestep {t} outside 1..{cfg.timesteps}")
    if z_t.ndim != 4 or z_t.shape[0] != cfg.c_lat:
        raise ShapeError(f"latent must be ({cfg.c_lat}, t, h, w), got {z_t.shape}")
    if cond.shape != (cfg.c_cond,) + z_t.shape[1:]:
        raise ShapeError(f"condition shape {cond.shape} incompatible with latent {z_t.shape}")
    if app.shape != (cfg.c_app,):
        raise ShapeError(f"appearance shape {app.shape}, expected ({cfg.c_app},)")
    if z_t.shape[2] % 2 or z_t.shape[3] % 2:
        raise ShapeError(f"latent extents {z_t.shape[2:]} must be even for the 2-level U-Net")

    temb = params["unet.time_table"][t - 1]
    cond_half = ops.avgpool_hw(cond)

    x0 = ops.conv3d(z_t, params["unet.in.kernel"], params["unet.in.bias"], padding=(0, 1, 1))
    s0, c_d0 = _block_forward(x0, "down0", cond, temb, app, params, cfg)
    s0t, tx_d0 = _temporal_forward(s0, "down0", params, temporal_enabled)

    xd = ops.conv3d(s0t, params["unet.down.kernel"], params["unet.down.bias"], stride=(1, 2, 2), padding=(0, 1, 1))
    s1, c_d1 = _block_forward(xd, "down1", cond_half, temb, app, params, cfg)
    s1t, tx_d1 = _temporal_forward(s1, "down1", params, temporal_enabled)

    xm, c_mid = _block_forward(s1t, "mid", None, temb, app, params, cfg)
    xmt, tx_mid = _temporal_forward(xm, "mid", params, temporal_enabled)

    u1_in = ops.concat_channels([xmt, s1t])
    xu, c_u1 = _block_forward(u1_in, "up1", None, temb, app, params, cfg)
    xut, tx_u1 = _temporal_forward(xu, "up1", params, temporal_enabled)

    xp = ops.upsample_hw(xut)
    xq = ops.conv3d(xp, params["unet.up.kernel"], params["unet.up.bias"], padding=(0, 1, 1))
    u0_in = ops.concat_channels([xq, s0t])
    xl, c_u0 = _block_forward(u0_in, "up0", None, temb, app, params, cfg)
    xlt, tx_u0 = _temporal_forward(xl, "up0", params, temporal_enabled)

    est = ops.conv3d(xlt, params["unet.out.kernel"], params["unet.out.bias"], padding=(0, 1, 1))
    sqrt_ab, sqrt_rem = _head_coeffs(cfg, t)
    eps_hat = (z_t - sqrt_ab * est) / sqrt_rem
    cache = {
        "t": t,
        "sqrt_ab": sqrt_ab,
        "sqrt_rem": sqrt_rem,
        "temb": temb,
        "app": app,
        "z_t": z_t,
        "x0": x0,
        "s0t": s0t,
        "xd": xd,
        "s1t": s1t,
        "xp": xp,
        "u1_in": u1_in,
        "u0_in": u0_in,
        "xlt": xlt,
        "blocks": {"down0": c_d0, "down1": c_d1, "mid": c_mid, "up1": c_u1, "up0": c_u0},
        "temporal": {"down0": tx_d0, "down1": tx_d1, "mid": tx_mid, "up1": tx_u1, "up0": tx_u0},
        "temporal_enabled": temporal_enabled,
        "cond_shape": cond.shape,
    }
    return eps_hat, cache


def denoise_backward(g_eps, cache, params, cfg, grads):
    """Backprop through the denoiser; returns (g_z, g_cond, g_app)."""
    temb = cache["temb"]
    app = cache["app"]
    enabled = cache["temporal_enabled"]
    blocks = cache["blocks"]
    tx = cache["temporal"]
    g_temb = np.zeros_like(temb)
    g_app = np.zeros_like(app)

    g_est = (-cache["sqrt_ab"] / cache["sqrt_rem"]) * g_eps
    g_xlt, gko, gbo = ops.conv3d_backward(g_est, cache["xlt"], params["unet.out.kernel"], padding=(0, 1, 1))
    add_grad(grads, "unet.out.kernel", gko)
    add_grad(grads, "unet.out.bias", gbo)
    g_xl = _temporal_backward(g_xlt, "up0", tx["up0"], params, grads, enabled)
    g_u0_in, _, gt, ga = _block_backward(g_xl, "up0", blocks["up0"], temb, app, params, grads)
    g_temb += gt
    g_app += ga
    b = cfg.base
    g_xq, g_s0t_a = ops.split_channels(g_u0_in, [2 * b, b])

    g_xp, gku, gbu = ops.conv3d_backward(g_xq, cache["xp"], params["unet.up.kernel"], padding=(0, 1, 1))
    add_grad(grads, "unet.up.kernel", gku)
    add_grad(grads, "unet.up.bias", gbu)
    g_xut = ops.upsample_hw_backward(g_xp)
    g_xu = _temporal_backward(g_xut, "up1", tx["up1"], params, grads, enabled)
    g_u1_in, _, gt, ga = _block_backward(g_xu, "up1", blocks["up1"], temb, app, params, grads)
    g_temb += gt
    g_app += ga
    g_xmt, g_s1t_a = ops.split_channels(g_u1_in, [2 * b, 2 * b])

    g_xm = _temporal_backward(g_xmt, "mid", tx["mid"], params, grads, enabled)
    g_s1t_b, _, gt, ga = _block_backward(g_xm, "mid", blocks["mid"], temb, app, params, grads)
    g_temb += gt
    g_app += ga
    g_s1t = g_s1t_a + g_s1t_b

    g_s1 = _temporal_backward(g_s1t, "down1", tx["down1"], params, grads, enabled)
    g_xd, g_cond_half, gt, ga = _block_backward(g_s1, "down1", blocks["down1"], temb, app, params, grads)
    g_temb += gt
    g_app += ga

    g_s0t_b, gkd, gbd = ops.conv3d_backward(
        g_xd, cache["s0t"], params["unet.down.kernel"], stride=(1, 2, 2), padding=(0, 1, 1)
    )
    add_grad(grads, "unet.down.kernel", gkd)
    add_grad(grads, "unet.down.bias", gbd)
    g_s0t = g_s0t_a + g_s0t_b

    g_s0 = _temporal_backward(g_s0t, "down0", tx["down0"], params, grads, enabled)
    g_x0, g_cond_full, gt, ga = _block_backward(g_s0, "down0", blocks["down0"], temb, app, params, grads)
    g_temb += gt
    g_app += ga

    g_z, gki, gbi = ops.conv3d_backward(g_x0, cache["z_t"], params["unet.in.kernel"], padding=(0, 1, 1))
    add_grad(grads, "unet.in.kernel", gki)
    add_grad(grads, "unet.in.bias", gbi)
    g_z = g_z + g_eps / cache["sqrt_rem"]

    g_cond = g_cond_full + ops.avgpool_hw_backward(g_cond_half)

    g_table = np.zeros_like(params["unet.time_table"])
    g_table[cache["t"] - 1] = g_temb
    add_grad(grads, "unet.time_table", g_table)
    return g_z, g_cond, g_app
