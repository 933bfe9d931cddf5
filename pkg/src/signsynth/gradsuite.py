"""Reusable finite-difference gradient suite.

Each entry probes one analytic backward pass against central differences
at step 1e-5 on small shapes.  Shared by the gradcheck CLI command and
the acceptance tests; every entry is pinned to a 1e-5 relative tolerance.
"""

import numpy as np

from . import ops
from .aggregation import init_aggregation_params, motion_aggregate, motion_aggregate_backward
from .gradcheck import finite_diff_check
from .model import ModalityBundle, ModelConfig, SignDiffusionModel
from .params import make_rng
from .unet import DenoiserConfig, denoise_backward, denoise_forward, init_denoiser_params

TOLERANCE = 1e-5


def check_conv3d(dilation, seed=11):
    """Input, kernel, and bias gradients of the dilated conv under a fixed probe."""
    rng = make_rng("gradsuite-conv", seed, dilation)
    x = rng.standard_normal((2, 4, 8, 8))
    kernel = rng.standard_normal((2, 2, 3, 3, 3)) * 0.5
    bias = rng.standard_normal(2) * 0.1
    probe = rng.standard_normal((2, 4, 8, 8))
    params = {"x": x, "kernel": kernel, "bias": bias}

    def fn(p):
        y = ops.conv3d(p["x"], p["kernel"], p["bias"], dilation=dilation, padding=dilation)
        gx, gk, gb = ops.conv3d_backward(probe, p["x"], p["kernel"], dilation=dilation, padding=dilation)
        return float(np.sum(y * probe)), {"x": gx, "kernel": gk, "bias": gb}

    def value_fn(p):
        return float(
            np.sum(ops.conv3d(p["x"], p["kernel"], p["bias"], dilation=dilation, padding=dilation) * probe)
        )

    return finite_diff_check(fn, params, value_fn=value_fn)


def check_conv1x1(seed=12):
    rng = make_rng("gradsuite-conv1x1", seed)
    x = rng.standard_normal((3, 2, 6, 6))
    weight = rng.standard_normal((4, 3)) * 0.5
    bias = rng.standard_normal(4) * 0.1
    probe = rng.standard_normal((4, 2, 6, 6))
    params = {"x": x, "weight": weight, "bias": bias}

    def fn(p):
        y = ops.conv1x1(p["x"], p["weight"], p["bias"])
        gx, gw, gb = ops.conv1x1_backward(probe, p["x"], p["weight"])
        return float(np.sum(y * probe)), {"x": gx, "weight": gw, "bias": gb}

    def value_fn(p):
        return float(np.sum(ops.conv1x1(p["x"], p["weight"], p["bias"]) * probe))

    return finite_diff_check(fn, params, value_fn=value_fn)


def check_motion_aggregate(seed=13):
    """Aggregation parameters and all three modality inputs."""
    c = 2
    rng = make_rng("gradsuite-motion", seed)
    params = {}
    init_aggregation_params(params, c, rng)
    # Zero-init fusion has zero gradient flow through its weight at the
    # origin only for the bias; nudge it to exercise the full path.
    params["agg.fuse.weight"] = rng.standard_normal(params["agg.fuse.weight"].shape) * 0.2
    for m in ("pose", "hand", "face"):
        params[f"f_{m}"] = rng.standard_normal((c, 2, 4, 4))
    probe = rng.standard_normal((c, 2, 4, 4))

    def split(p):
        agg = {k: v for k, v in p.items() if k.startswith("agg.")}
        return agg, p["f_pose"], p["f_hand"], p["f_face"]

    def fn(p):
        agg, fp, fh, ff = split(p)
        out, cache = motion_aggregate(fp, fh, ff, agg)
        grads = {}
        gp, gh, gf = motion_aggregate_backward(probe, cache, agg, grads)
        grads["f_pose"], grads["f_hand"], grads["f_face"] = gp, gh, gf
        return float(np.sum(out * probe)), grads

    def value_fn(p):
        agg, fp, fh, ff = split(p)
        out, _ = motion_aggregate(fp, fh, ff, agg)
        return float(np.sum(out * probe))

    return finite_diff_check(fn, params, value_fn=value_fn)


def check_denoiser(seed=14, temporal_enabled=True):
    """Every U-Net parameter plus the latent, condition, and appearance inputs."""
    cfg = DenoiserConfig(c_lat=4, c_cond=2, base=3, d_time=3, c_app=2, timesteps=4)
    rng = make_rng("gradsuite-denoiser", seed)
    params = {}
    init_denoiser_params(params, cfg, rng)
    # Identity temporal layers have flat loss curvature at init; randomize
    # them a little so their finite differences are informative.
    for name in list(params):
        if name.startswith("unet.temporal."):
            params[name] = params[name] + 0.1 * rng.standard_normal(params[name].shape)
    params["z_t"] = rng.standard_normal((cfg.c_lat, 2, 4, 4))
    params["cond"] = rng.standard_normal((cfg.c_cond, 2, 4, 4))
    params["app"] = rng.standard_normal(cfg.c_app)
    probe = rng.standard_normal((cfg.c_lat, 2, 4, 4))
    t = 3

    def split(p):
        unet = {k: v for k, v in p.items() if k.startswith("unet.")}
        return unet, p["z_t"], p["cond"], p["app"]

    def fn(p):
        unet, z, cond, app = split(p)
        eps_hat, cache = denoise_forward(z, t, cond, app, unet, cfg, temporal_enabled)
        grads = {}
        gz, gcond, gapp = denoise_backward(probe, cache, unet, cfg, grads)
        grads["z_t"], grads["cond"], grads["app"] = gz, gcond, gapp
        return float(np.sum(eps_hat * probe)), grads

    def value_fn(p):
        unet, z, cond, app = split(p)
        eps_hat, _ = denoise_forward(z, t, cond, app, unet, cfg, temporal_enabled)
        return float(np.sum(eps_hat * probe))

    return finite_diff_check(fn, params, value_fn=value_fn)


def tiny_model():
    cfg = ModelConfig(
        c_img=2,
        channels=3,
        enc_stride=2,
        base_width=3,
        c_app=3,
        d_time=3,
        patch=2,
        stub_hidden=3,
        timesteps=5,
    )
    return SignDiffusionModel(cfg)


def tiny_bundle(cfg, frames=2, size=8, seed=21):
    rng = make_rng("gradsuite-bundle", seed)

    def u(shape):
        return rng.uniform(0.05, 0.95, size=shape)

    return ModalityBundle(
        pose_map=u((cfg.c_img, frames, size, size)),
        hand_map=u((cfg.c_img, frames, size, size)),
        face_map=u((cfg.c_img, frames, size, size)),
        reference_image=u((cfg.c_img, size, size)),
        target_clip=u((cfg.c_img, frames, size, size)),
    ).validate()


def check_full_loss(seed=15, sample=6):
    """End-to-end loss gradient through encoders, aggregation, stub, and U-Net.

    Coordinates are subsampled per tensor (seeded) to keep the check fast;
    the component checks above cover every coordinate of each kernel.
    """
    model = tiny_model()
    cfg = model.cfg
    bundle = tiny_bundle(cfg)
    params = model.init_params(seed)
    rng = make_rng("gradsuite-loss", seed)
    z_shape = (cfg.c_lat, 2, 4, 4)
    draws = [(3, rng.standard_normal(z_shape)), (1, rng.standard_normal(z_shape))]
    bundles = [bundle, bundle]

    def fn(p):
        loss, grads = model.training_loss_and_grads(p, bundles, draws, temporal_enabled=True)
        return loss, grads

    def value_fn(p):
        items = []
        for b in bundles:
            cond, app, _ = model.condition_forward(p, b)
            items.append((model.codec.encode(b.target_clip), cond, app))
        loss, _ = model.loss_forward(p, items, draws, temporal_enabled=True)
        return loss

    return finite_diff_check(fn, params, value_fn=value_fn, sample=sample, seed=seed)


def run_gradient_suite():
    """(name, max relative error, tolerance) for every entry."""
    results = []
    for d in (1, 2, 4):
        results.append((f"conv3d dilation {d}", check_conv3d(d), TOLERANCE))
    results.append(("conv1x1", check_conv1x1(), TOLERANCE))
    results.append(("motion aggregate", check_motion_aggregate(), TOLERANCE))
    results.append(("denoiser", check_denoiser(), TOLERANCE))
    results.append(("full training loss (sampled coords)", check_full_loss(), TOLERANCE))
    return results
