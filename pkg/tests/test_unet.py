import numpy as np
import pytest

from signsynth.errors import ShapeError
from signsynth.params import make_rng
from signsynth.schedule import make_schedule
from signsynth.unet import (
    DenoiserConfig,
    denoise_forward,
    init_denoiser_params,
    temporal_param_names,
)

CFG = DenoiserConfig(c_lat=4, c_cond=2, base=3, d_time=3, c_app=2, timesteps=6)


def setup(seed=0, cfg=CFG):
    params = init_denoiser_params({}, cfg, make_rng("test-unet", seed))
    rng = np.random.default_rng(seed + 100)
    z = rng.standard_normal((cfg.c_lat, 2, 4, 4))
    cond = rng.standard_normal((cfg.c_cond, 2, 4, 4))
    app = rng.standard_normal(cfg.c_app)
    return params, z, cond, app


def test_output_shape_grid():
    for t_frames, hw in ((1, 4), (3, 8)):
        params, _, _, app = setup()
        rng = np.random.default_rng(5)
        z = rng.standard_normal((CFG.c_lat, t_frames, hw, hw))
        cond = rng.standard_normal((CFG.c_cond, t_frames, hw, hw))
        eps_hat, _ = denoise_forward(z, 3, cond, app, params, CFG)
        assert eps_hat.shape == z.shape


def test_temporal_identity_at_init():
    # Identity temporal layers: enabling them changes nothing, bit for bit.
    params, z, cond, app = setup(seed=1)
    off, _ = denoise_forward(z, 2, cond, app, params, CFG, temporal_enabled=False)
    on, _ = denoise_forward(z, 2, cond, app, params, CFG, temporal_enabled=True)
    assert np.array_equal(off, on)


def test_temporal_single_frame_matches_disabled():
    params, _, _, app = setup(seed=2)
    rng = np.random.default_rng(9)
    z = rng.standard_normal((CFG.c_lat, 1, 4, 4))
    cond = rng.standard_normal((CFG.c_cond, 1, 4, 4))
    off, _ = denoise_forward(z, 1, cond, app, params, CFG, temporal_enabled=False)
    on, _ = denoise_forward(z, 1, cond, app, params, CFG, temporal_enabled=True)
    assert np.array_equal(off, on)


def test_condition_is_live():
    params, z, cond, app = setup(seed=3)
    a, _ = denoise_forward(z, 4, cond, app, params, CFG)
    b, _ = denoise_forward(z, 4, np.zeros_like(cond), app, params, CFG)
    assert not np.allclose(a, b)


def test_zeroed_injection_decouples_condition():
    params, z, cond, app = setup(seed=4)
    for name in list(params):
        if ".cond." in name:
            params[name] = np.zeros_like(params[name])
    a, _ = denoise_forward(z, 4, cond, app, params, CFG)
    b, _ = denoise_forward(z, 4, 123.0 * cond + 1.0, app, params, CFG)
    assert np.array_equal(a, b)


def test_time_step_changes_output():
    params, z, cond, app = setup(seed=5)
    a, _ = denoise_forward(z, 1, cond, app, params, CFG)
    b, _ = denoise_forward(z, 5, cond, app, params, CFG)
    assert not np.allclose(a, b)


def test_noise_head_identity():
    # eps_hat recombines the trunk estimate with the schedule weights:
    # z_t == sqrt(ab)*est + sqrt(1-ab)*eps_hat must hold exactly.
    params, z, cond, app = setup(seed=6)
    t = 3
    eps_hat, cache = denoise_forward(z, t, cond, app, params, CFG)
    sched = make_schedule(CFG.timesteps, CFG.beta_start, CFG.beta_end)
    ab = sched.alpha_bar(t)
    est = (z - np.sqrt(1 - ab) * eps_hat) / np.sqrt(ab)
    recon = np.sqrt(ab) * est + np.sqrt(1 - ab) * eps_hat
    assert np.max(np.abs(recon - z)) < 1e-12
    assert cache["sqrt_ab"] == pytest.approx(np.sqrt(ab), abs=1e-15)


def test_temporal_names_disjoint_and_complete():
    params, _, _, _ = setup(seed=7)
    temporal = temporal_param_names(params)
    assert temporal and all(n.startswith("unet.temporal.") for n in temporal)
    spatial = [n for n in params if n not in set(temporal)]
    assert not any(n.startswith("unet.temporal.") for n in spatial)
    assert len(temporal) + len(spatial) == len(params)


def test_validation_errors():
    params, z, cond, app = setup(seed=8)
    with pytest.raises(ShapeError):
        denoise_forward(z, 0, cond, app, params, CFG)
    with pytest.raises(ShapeError):
        denoise_forward(z, 7, cond, app, params, CFG)
    with pytest.raises(ShapeError):
        denoise_forward(z[:3], 1, cond, app, params, CFG)
    with pytest.raises(ShapeError):
        denoise_forward(z, 1, cond[:, :, :2], app, params, CFG)
    with pytest.raises(ShapeError):
        denoise_forward(z, 1, cond, app[:1], params, CFG)
    odd = np.zeros((CFG.c_lat, 1, 5, 4))
    with pytest.raises(ShapeError):
        denoise_forward(odd, 1, np.zeros((CFG.c_cond, 1, 5, 4)), app, params, CFG)
