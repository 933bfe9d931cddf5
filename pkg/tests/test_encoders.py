import numpy as np
import pytest

from signsynth.aggregation import init_aggregation_params
from signsynth.encoders import (
    CompositionConfig,
    FoundationStub,
    appearance_forward,
    compose_condition,
    encode_modality,
    encoder_forward,
    foundation_features,
    init_encoder_params,
    stub_apply,
)
from signsynth.errors import ConfigError, ShapeError
from signsynth.params import make_rng


def enc_params(c_in=3, c_out=4, seed=0, prefix="enc.pose"):
    return init_encoder_params({}, prefix, c_in, c_out, make_rng("test-enc", seed))


def test_zero_input_zero_bias_gives_zero(rng):
    params = enc_params()
    x = np.zeros((3, 2, 16, 16))
    y, _ = encoder_forward(x, params, "enc.pose", 4)
    assert y.shape == (4, 2, 4, 4)
    assert np.array_equal(y, np.zeros_like(y))


def test_deterministic(rng):
    params = enc_params(seed=1)
    x = rng.standard_normal((3, 2, 8, 8))
    a = encode_modality(x, "pose", params)
    b = encode_modality(x, "pose", params)
    assert np.array_equal(a, b)


def test_receptive_field_of_stack(rng):
    # Three 3x3x3 convs at strides (2,2,1): an output voxel sees a bounded
    # input window; a change well outside it must not reach that voxel.
    params = enc_params(seed=2)
    x = rng.standard_normal((3, 3, 32, 32))
    y0, _ = encoder_forward(x, params, "enc.pose", 4)
    poked = x.copy()
    poked[:, :, -1, -1] += 100.0
    y1, _ = encoder_forward(poked, params, "enc.pose", 4)
    assert y1[0, 0, 0, 0] == y0[0, 0, 0, 0]
    assert not np.array_equal(y0, y1)


def test_indivisible_extent_raises():
    params = enc_params()
    with pytest.raises(ShapeError):
        encoder_forward(np.zeros((3, 1, 10, 16)), params, "enc.pose", 4)
    with pytest.raises(ConfigError):
        encoder_forward(np.zeros((3, 1, 16, 16)), params, "enc.pose", 3)


def test_unknown_modality_rejected():
    with pytest.raises(ConfigError):
        encode_modality(np.zeros((3, 1, 8, 8)), "gaze", enc_params())


def test_appearance_zero_image():
    params = init_encoder_params({}, "enc.app", 3, 5, make_rng("test-enc", 3))
    vec, _ = appearance_forward(np.zeros((3, 16, 16)), params)
    assert vec.shape == (5,)
    assert np.array_equal(vec, np.zeros(5))


def test_appearance_distinguishes_images(rng):
    params = init_encoder_params({}, "enc.app", 3, 5, make_rng("test-enc", 4))
    a, _ = appearance_forward(rng.uniform(size=(3, 16, 16)), params)
    b, _ = appearance_forward(rng.uniform(size=(3, 16, 16)), params)
    assert not np.allclose(a, b)


def test_stub_frozen_and_reproducible(rng):
    stub = FoundationStub.create(11, c_in=8, hidden=6, c_out=4)
    again = FoundationStub.create(11, c_in=8, hidden=6, c_out=4)
    assert np.array_equal(stub.w1, again.w1) and np.array_equal(stub.b2, again.b2)
    with pytest.raises(ValueError):
        stub.w1[0, 0, 0, 0, 0] = 1.0

    other = FoundationStub.create(12, c_in=8, hidden=6, c_out=4)
    x = rng.standard_normal((8, 2, 5, 5))
    ya, _ = stub_apply(x, stub)
    yb, _ = stub_apply(x, other)
    assert not np.allclose(ya, yb)


def test_foundation_features_shape_contract(rng):
    stub = FoundationStub.create(13, c_in=8, hidden=6, c_out=4)
    fh = rng.standard_normal((4, 2, 5, 5))
    ff = rng.standard_normal((4, 2, 5, 5))
    y, _ = foundation_features(fh, ff, stub)
    assert y.shape == (4, 2, 5, 5)
    with pytest.raises(ShapeError):
        foundation_features(fh, rng.standard_normal((4, 2, 6, 6)), stub)


def comp_setup(rng, c=3):
    stub = FoundationStub.create(21, c_in=2 * c, hidden=4, c_out=c)
    params = init_aggregation_params({}, c, make_rng("test-comp", 0))
    params["agg.fuse.weight"] = 0.2 * rng.standard_normal((c, 7 * c))
    feats = tuple(rng.standard_normal((c, 2, 4, 4)) for _ in range(3))
    return stub, params, feats


def test_condition_affine_in_lam(rng):
    stub, params, (fp, fh, ff) = comp_setup(rng)
    cs = {}
    for lam in (0.0, 0.1, 1.0):
        cs[lam], _ = compose_condition(fp, fh, ff, stub, params, CompositionConfig(lam=lam))
    # collinear: c(1.0) - c(0) == 10 * (c(0.1) - c(0))
    residual = (cs[1.0] - cs[0.0]) - 10.0 * (cs[0.1] - cs[0.0])
    assert np.max(np.abs(residual)) < 1e-12


def test_lam_zero_is_base_plus_foundation(rng):
    stub, params, (fp, fh, ff) = comp_setup(rng)
    got, _ = compose_condition(fp, fh, ff, stub, params, CompositionConfig(lam=0.0))
    fnd, _ = foundation_features(fh, ff, stub)
    assert np.allclose(got, fp + fh + ff + fnd, atol=1e-15)


def test_toggles(rng):
    stub, params, (fp, fh, ff) = comp_setup(rng)
    plain, _ = compose_condition(
        fp, fh, ff, stub, params, CompositionConfig(lam=0.5, enable_motion=False, enable_foundation=False)
    )
    assert np.array_equal(plain, fp + fh + ff)
    no_motion, _ = compose_condition(
        fp, fh, ff, stub, params, CompositionConfig(lam=0.5, enable_motion=False)
    )
    fnd, _ = foundation_features(fh, ff, stub)
    assert np.allclose(no_motion, fp + fh + ff + fnd, atol=1e-15)


def test_negative_lam_rejected():
    with pytest.raises(ConfigError):
        CompositionConfig(lam=-0.1)
