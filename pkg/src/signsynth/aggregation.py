"""Multi-scale spatio-temporal aggregation of the three modality streams.

Each modality (pose, hand, face) gets an independent 3x3x3 conv per
dilation in (1, 2, 4); branch outputs are the per-dilation sums across
modalities.  A 1x1 cross-feature conv mixes the concatenated modalities,
and a zero-initialised 1x1 fusion conv maps the concatenation of
(pose, hand, face, cross, branch_1, branch_2, branch_4) back to c channels.
The fused map rides on a residual mean of the three inputs, so at
initialisation the module is exactly that mean.
"""

import numpy as np

from . import ops
from .errors import ShapeError
from .params import add_grad, uniform_init

MODALITIES = ("pose", "hand", "face")
DILATIONS = (1, 2, 4)


def init_aggregation_params(params, channels, rng):
    fan = channels * 27
    for m in MODALITIES:
        for d in DILATIONS:
            params[f"agg.{m}.d{d}.kernel"] = uniform_init(rng, (channels, channels, 3, 3, 3), fan)
            params[f"agg.{m}.d{d}.bias"] = np.zeros(channels)
    params["agg.cross.weight"] = uniform_init(rng, (channels, 3 * channels), 3 * channels)
    params["agg.cross.bias"] = np.zeros(channels)
    # Fusion starts at zero so the module opens as a pure residual mean.
    params["agg.fuse.weight"] = np.zeros((channels, 7 * channels))
    params["agg.fuse.bias"] = np.zeros(channels)
    return params


def _branch_params(params, modality, d):
    return ops.Conv3dParams(
        kernel=params[f"agg.{modality}.d{d}.kernel"],
        bias=params[f"agg.{modality}.d{d}.bias"],
        dilation=d,
    )


def _check_inputs(f_pose, f_hand, f_face):
    if not (f_pose.shape == f_hand.shape == f_face.shape):
        raise ShapeError(
            f"modality features must share a shape, got {f_pose.shape}, {f_hand.shape}, {f_face.shape}"
        )


def multiscale_branch(f_pose, f_hand, f_face, d, params):
    """Sum of the three per-modality dilated convs at one dilation."""
    _check_inputs(f_pose, f_hand, f_face)
    if d not in DILATIONS:
        raise ShapeError(f"dilation {d} not in {DILATIONS}")
    return (
        ops.conv3d_dilated(f_pose, _branch_params(params, "pose", d))
        + ops.conv3d_dilated(f_hand, _branch_params(params, "hand", d))
        + ops.conv3d_dilated(f_face, _branch_params(params, "face", d))
    )


def cross_feature(f_pose, f_hand, f_face, params):
    """ReLU of a 1x1 conv over the channel-concatenated modalities."""
    _check_inputs(f_pose, f_hand, f_face)
    cat = ops.concat_channels([f_pose, f_hand, f_face])
    return ops.relu(ops.conv1x1(cat, params["agg.cross.weight"], params["agg.cross.bias"]))


def motion_aggregate(f_pose, f_hand, f_face, params):
    """Fused multi-scale motion map with a residual mean of the inputs.

    Returns (output, cache); the cache feeds motion_aggregate_backward.
    """
    _check_inputs(f_pose, f_hand, f_face)
    feats = (f_pose, f_hand, f_face)
    cat3 = ops.concat_channels(feats)
    cross_pre = ops.conv1x1(cat3, params["agg.cross.weight"], params["agg.cross.bias"])
    cross = ops.relu(cross_pre)
    branches = [multiscale_branch(f_pose, f_hand, f_face, d, params) for d in DILATIONS]
    fused_in = ops.concat_channels([f_pose, f_hand, f_face, cross] + branches)
    fused = ops.conv1x1(fused_in, params["agg.fuse.weight"], params["agg.fuse.bias"])
    out = fused + (f_pose + f_hand + f_face) / 3.0
    cache = {"feats": feats, "cat3": cat3, "cross_pre": cross_pre, "fused_in": fused_in}
    return out, cache


def motion_aggregate_backward(g, cache, params, grads):
    """Accumulates parameter grads into ``grads``; returns input grads."""
    f_pose, f_hand, f_face = cache["feats"]
    c = f_pose.shape[0]

    g_fused_in, g_fw, g_fb = ops.conv1x1_backward(g, cache["fused_in"], params["agg.fuse.weight"])
    add_grad(grads, "agg.fuse.weight", g_fw)
    add_grad(grads, "agg.fuse.bias", g_fb)
    parts = ops.split_channels(g_fused_in, [c] * 7)
    g_pose, g_hand, g_face, g_cross = parts[0], parts[1], parts[2], parts[3]

    # Residual mean path.
    g_pose = g_pose + g / 3.0
    g_hand = g_hand + g / 3.0
    g_face = g_face + g / 3.0

    # Cross-feature path.
    g_cross_pre = ops.relu_backward(g_cross, cache["cross_pre"])
    g_cat3, g_cw, g_cb = ops.conv1x1_backward(g_cross_pre, cache["cat3"], params["agg.cross.weight"])
    add_grad(grads, "agg.cross.weight", g_cw)
    add_grad(grads, "agg.cross.bias", g_cb)
    cat_parts = ops.split_channels(g_cat3, [c, c, c])
    g_pose = g_pose + cat_parts[0]
    g_hand = g_hand + cat_parts[1]
    g_face = g_face + cat_parts[2]

    # Dilated branches.
    for d, g_branch in zip(DILATIONS, parts[4:]):
        for modality, feat in zip(MODALITIES, cache["feats"]):
            p = _branch_params(params, modality, d)
            gx, gk, gb = ops.conv3d_dilated_backward(feat, p, g_branch)
            add_grad(grads, f"agg.{modality}.d{d}.kernel", gk)
            add_grad(grads, f"agg.{modality}.d{d}.bias", gb)
            if modality == "pose":
                g_pose = g_pose + gx
            elif modality == "hand":
                g_hand = g_hand + gx
            else:
                g_face = g_face + gx

    return g_pose, g_hand, g_face
