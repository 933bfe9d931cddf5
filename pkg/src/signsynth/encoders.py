"""Modality encoders, the frozen foundation-feature stub, and condition composition.

Each modality map (c_img, t, H, W) passes through three 3x3x3 convs with a
total spatial stride of 4 (time is never strided), giving features on the
latent grid.  A matching conv stack pools a single reference image into a
global appearance vector.  The condition stream is the sum of the three
modality features, frozen random-filter foundation features of hand+face,
and a scaled motion aggregate.
"""

from dataclasses import dataclass

import numpy as np

from . import ops
from .aggregation import motion_aggregate, motion_aggregate_backward
from .errors import ConfigError, ShapeError
from .params import add_grad, make_rng, uniform_init

# Per-layer spatial strides realizing a given total stride.
_LAYER_STRIDES = {1: (1, 1, 1), 2: (2, 1, 1), 4: (2, 2, 1)}


def init_encoder_params(params, prefix, c_in, c_out, rng):
    params[f"{prefix}.l1.kernel"] = uniform_init(rng, (c_out, c_in, 3, 3, 3), c_in * 27)
    params[f"{prefix}.l1.bias"] = np.zeros(c_out)
    for layer in ("l2", "l3"):
        params[f"{prefix}.{layer}.kernel"] = uniform_init(rng, (c_out, c_out, 3, 3, 3), c_out * 27)
        params[f"{prefix}.{layer}.bias"] = np.zeros(c_out)
    return params


def encoder_forward(x, params, prefix, stride_total):
    """Three stride-sharing convs with ReLU between layers; returns (y, cache)."""
    if stride_total not in _LAYER_STRIDES:
        raise ConfigError(f"unsupported encoder stride {stride_total}, pick one of {sorted(_LAYER_STRIDES)}")
    if x.ndim != 4:
        raise ShapeError(f"encoder expects (c, t, h, w), got {x.shape}")
    h, w = x.shape[2], x.shape[3]
    if h % stride_total or w % stride_total:
        raise ShapeError(f"spatial extents {h}x{w} not divisible by stride {stride_total}")
    s1, s2, s3 = _LAYER_STRIDES[stride_total]
    a1 = ops.conv3d(x, params[f"{prefix}.l1.kernel"], params[f"{prefix}.l1.bias"], stride=(1, s1, s1))
    r1 = ops.relu(a1)
    a2 = ops.conv3d(r1, params[f"{prefix}.l2.kernel"], params[f"{prefix}.l2.bias"], stride=(1, s2, s2))
    r2 = ops.relu(a2)
    y = ops.conv3d(r2, params[f"{prefix}.l3.kernel"], params[f"{prefix}.l3.bias"], stride=(1, s3, s3))
    cache = {"x": x, "a1": a1, "r1": r1, "a2": a2, "r2": r2, "strides": (s1, s2, s3)}
    return y, cache


def encoder_backward(g, cache, params, prefix, grads):
    s1, s2, s3 = cache["strides"]
    g_r2, gk3, gb3 = ops.conv3d_backward(g, cache["r2"], params[f"{prefix}.l3.kernel"], stride=(1, s3, s3))
    add_grad(grads, f"{prefix}.l3.kernel", gk3)
    add_grad(grads, f"{prefix}.l3.bias", gb3)
    g_a2 = ops.relu_backward(g_r2, cache["a2"])
    g_r1, gk2, gb2 = ops.conv3d_backward(g_a2, cache["r1"], params[f"{prefix}.l2.kernel"], stride=(1, s2, s2))
    add_grad(grads, f"{prefix}.l2.kernel", gk2)
    add_grad(grads, f"{prefix}.l2.bias", gb2)
    g_a1 = ops.relu_backward(g_r1, cache["a1"])
    g_x, gk1, gb1 = ops.conv3d_backward(g_a1, cache["x"], params[f"{prefix}.l1.kernel"], stride=(1, s1, s1))
    add_grad(grads, f"{prefix}.l1.kernel", gk1)
    add_grad(grads, f"{prefix}.l1.bias", gb1)
    return g_x


def encode_modality(x, which, params, stride_total=4):
    """Feature map for one of the pose/hand/face streams."""
    if which not in ("pose", "hand", "face"):
        raise ConfigError(f"unknown modality {which!r}")
    y, _ = encoder_forward(x, params, f"enc.{which}", stride_total)
    return y


def appearance_forward(image, params, stride_total=4):
    """Global appearance embedding of a single (c_img, H, W) reference image."""
    if image.ndim != 3:
        raise ShapeError(f"appearance encoder expects (c, h, w), got {image.shape}")
    clip = image[:, None]
    y, cache = encoder_forward(clip, params, "enc.app", stride_total)
    vec = ops.global_mean(y)
    cache["y_shape"] = y.shape
    return vec, cache


def appearance_backward(g_vec, cache, params, grads):
    g_y = ops.global_mean_backward(g_vec, cache["y_shape"])
    g_clip = encoder_backward(g_y, cache, params, "enc.app", grads)
    return g_clip[:, 0]


@dataclass(frozen=True)
class FoundationStub:
    """Frozen random-filter conv stack standing in for a pretrained backbone.

    Weights are materialised once from the seed and marked read-only; no
    training step may touch them.  Gradients still flow to the inputs.
    """

    seed: int
    c_in: int
    hidden: int
    c_out: int
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def create(cls, seed, c_in, hidden, c_out):
        rng = make_rng("foundation-stub", seed)
        w1 = uniform_init(rng, (hidden, c_in, 3, 3, 3), c_in * 27)
        b1 = rng.uniform(-0.1, 0.1, size=hidden)
        w2 = uniform_init(rng, (c_out, hidden, 3, 3, 3), hidden * 27)
        b2 = rng.uniform(-0.1, 0.1, size=c_out)
        for arr in (w1, b1, w2, b2):
            arr.flags.writeable = False
        return cls(seed=seed, c_in=c_in, hidden=hidden, c_out=c_out, w1=w1, b1=b1, w2=w2, b2=b2)

    def snapshot(self):
        return [self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy()]


def stub_apply(x, stub):
    """Two frozen convs with a ReLU in between; returns (features, cache)."""
    a1 = ops.conv3d(x, stub.w1, stub.b1)
    r1 = ops.relu(a1)
    y = ops.conv3d(r1, stub.w2, stub.b2)
    return y, {"x": x, "a1": a1, "r1": r1}


def stub_apply_backward(g, cache, stub):
    """Input gradient only; stub weights never receive gradients."""
    g_r1, _, _ = ops.conv3d_backward(g, cache["r1"], stub.w2)
    g_a1 = ops.relu_backward(g_r1, cache["a1"])
    g_x, _, _ = ops.conv3d_backward(g_a1, cache["x"], stub.w1)
    return g_x


def foundation_features(f_hand, f_face, stub):
    """Frozen features of the concatenated hand and face streams."""
    if f_hand.shape != f_face.shape:
        raise ShapeError(f"hand/face features must match, got {f_hand.shape} vs {f_face.shape}")
    cat = ops.concat_channels([f_hand, f_face])
    y, cache = stub_apply(cat, stub)
    cache["c"] = f_hand.shape[0]
    return y, cache


def foundation_features_backward(g, cache, stub):
    g_cat = stub_apply_backward(g, cache, stub)
    c = cache["c"]
    g_hand, g_face = ops.split_channels(g_cat, [c, c])
    return g_hand, g_face


@dataclass(frozen=True)
class CompositionConfig:
    lam: float = 0.01
    enable_motion: bool = True
    enable_foundation: bool = True

    def __post_init__(self):
        if self.lam < 0.0:
            raise ConfigError(f"motion weight must be non-negative, got {self.lam}")


def compose_condition(f_pose, f_hand, f_face, stub, params, comp):
    """Condition stream: modality sum + foundation features + lam * motion.

    The dependence on lam is affine by construction.  Returns (c, cache).
    """
    if not (f_pose.shape == f_hand.shape == f_face.shape):
        raise ShapeError(
            f"modality features must share a shape, got {f_pose.shape}, {f_hand.shape}, {f_face.shape}"
        )
    cache = {"comp": comp}
    base = f_pose + f_hand + f_face
    if comp.enable_foundation:
        fnd, fnd_cache = foundation_features(f_hand, f_face, stub)
        cache["fnd"] = fnd_cache
        base = base + fnd
    if comp.enable_motion:
        motion, motion_cache = motion_aggregate(f_pose, f_hand, f_face, params)
        cache["motion"] = motion_cache
        out = base + comp.lam * motion
    else:
        out = base
    return out, cache


def compose_condition_backward(g, cache, stub, params, grads):
    comp = cache["comp"]
    g_pose = g.copy()
    g_hand = g.copy()
    g_face = g.copy()
    if comp.enable_foundation:
        gh, gf = foundation_features_backward(g, cache["fnd"], stub)
        g_hand = g_hand + gh
        g_face = g_face + gf
    if comp.enable_motion:
        gp, gh, gf = motion_aggregate_backward(comp.lam * g, cache["motion"], params, grads)
        g_pose = g_pose + gp
        g_hand = g_hand + gh
        g_face = g_face + gf
    return g_pose, g_hand, g_face
