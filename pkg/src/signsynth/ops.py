"""Dense float64 conv and activation kernels with hand-written backward passes.

Feature volumes are numpy arrays shaped (channels, t, h, w), C-order
float64.  Every forward raises on non-finite output values.  The general
``conv3d`` gathers one strided slice per kernel tap into a column stack and
performs a single matmul, so results are reproducible bit for bit at a
fixed thread count.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, ShapeError


def _triple(v):
    if isinstance(v, (int, np.integer)):
        return (int(v), int(v), int(v))
    t = tuple(int(x) for x in v)
    if len(t) != 3:
        raise ShapeError(f"expected 3 entries, got {v!r}")
    return t


def ensure_finite(name, arr):
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values in {name}")
    return arr


def out_extent(n, k, stride, dilation, pad):
    span = (k - 1) * dilation + 1
    return (n + 2 * pad - span) // stride + 1


def _check_volume(x, c_in, op):
    if x.ndim != 4:
        raise ShapeError(f"{op}: expected (c, t, h, w) input, got shape {x.shape}")
    if x.shape[0] != c_in:
        raise ShapeError(f"{op}: input has {x.shape[0]} channels, kernel expects {c_in}")


def _gather_taps(padded, ksize, stride, dilation, out_shape):
    """Stack the input slice under each kernel tap: (c_in, kt, kh, kw, To, Ho, Wo)."""
    c_in = padded.shape[0]
    kt, kh, kw = ksize
    st, sh, sw = stride
    dt, dh, dw = dilation
    to, ho, wo = out_shape
    stack = np.empty((c_in, kt, kh, kw, to, ho, wo), dtype=np.float64)
    for a in range(kt):
        tsl = slice(a * dt, a * dt + (to - 1) * st + 1, st)
        for b in range(kh):
            hsl = slice(b * dh, b * dh + (ho - 1) * sh + 1, sh)
            for c in range(kw):
                wsl = slice(c * dw, c * dw + (wo - 1) * sw + 1, sw)
                stack[:, a, b, c] = padded[:, tsl, hsl, wsl]
    return stack


def _conv_geometry(x, kernel, stride, dilation, padding, op):
    c_out, c_in = kernel.shape[:2]
    ksize = kernel.shape[2:]
    _check_volume(x, c_in, op)
    stride = _triple(stride)
    dilation = _triple(dilation)
    padding = _triple(padding)
    if min(stride) < 1 or min(dilation) < 1 or min(padding) < 0:
        raise ShapeError(f"{op}: stride/dilation must be positive, padding non-negative")
    out_shape = tuple(
        out_extent(n, k, s, d, p)
        for n, k, s, d, p in zip(x.shape[1:], ksize, stride, dilation, padding)
    )
    if min(out_shape) < 1:
        raise ShapeError(
            f"{op}: input extents {x.shape[1:]} too small for kernel {ksize}, "
            f"stride {stride}, dilation {dilation}, padding {padding}"
        )
    return c_out, c_in, ksize, stride, dilation, padding, out_shape


def conv3d(x, kernel, bias, stride=1, dilation=1, padding=1):
    """3D convolution of a (c_in, t, h, w) volume with zero padding.

    kernel: (c_out, c_in, kt, kh, kw); bias: (c_out,).  Output extent per
    axis is (n + 2p - ((k-1)d + 1)) // s + 1.
    """
    c_out, c_in, ksize, stride, dilation, padding, out_shape = _conv_geometry(
        x, kernel, stride, dilation, padding, "conv3d"
    )
    pt, ph, pw = padding
    padded = np.pad(x, ((0, 0), (pt, pt), (ph, ph), (pw, pw)))
    stack = _gather_taps(padded, ksize, stride, dilation, out_shape)
    flat = kernel.reshape(c_out, -1) @ stack.reshape(stack.shape[0] * np.prod(ksize), -1)
    y = flat.reshape((c_out,) + out_shape) + bias[:, None, None, None]
    return ensure_finite("conv3d output", y)


def conv3d_backward(g, x, kernel, stride=1, dilation=1, padding=1):
    """Gradients of conv3d w.r.t. input, kernel, and bias given upstream g."""
    c_out, c_in, ksize, stride, dilation, padding, out_shape = _conv_geometry(
        x, kernel, stride, dilation, padding, "conv3d_backward"
    )
    if g.shape != (c_out,) + out_shape:
        raise ShapeError(f"conv3d_backward: upstream shape {g.shape}, expected {(c_out,) + out_shape}")
    pt, ph, pw = padding
    padded = np.pad(x, ((0, 0), (pt, pt), (ph, ph), (pw, pw)))
    stack = _gather_taps(padded, ksize, stride, dilation, out_shape)

    g_flat = g.reshape(c_out, -1)
    grad_bias = g_flat.sum(axis=1)
    grad_kernel = (g_flat @ stack.reshape(c_in * np.prod(ksize), -1).T).reshape(kernel.shape)

    # Scatter the tap-stack gradient back into padded-input coordinates.
    g_stack = (kernel.reshape(c_out, -1).T @ g_flat).reshape(stack.shape)
    grad_padded = np.zeros_like(padded)
    kt, kh, kw = ksize
    st, sh, sw = stride
    dt, dh, dw = dilation
    to, ho, wo = out_shape
    for a in range(kt):
        tsl = slice(a * dt, a * dt + (to - 1) * st + 1, st)
        for b in range(kh):
            hsl = slice(b * dh, b * dh + (ho - 1) * sh + 1, sh)
            for c in range(kw):
                wsl = slice(c * dw, c * dw + (wo - 1) * sw + 1, sw)
                grad_padded[:, tsl, hsl, wsl] += g_stack[:, a, b, c]
    t_in, h_in, w_in = x.shape[1:]
    grad_x = grad_padded[:, pt : pt + t_in, ph : ph + h_in, pw : pw + w_in]
    return grad_x, grad_kernel, grad_bias


@dataclass
class Conv3dParams:
    """Full 3x3x3 kernel with a per-output-channel bias and one dilation."""

    kernel: np.ndarray  # (c_out, c_in, 3, 3, 3)
    bias: np.ndarray  # (c_out,)
    dilation: int = 1

    def __post_init__(self):
        if self.kernel.ndim != 5 or self.kernel.shape[2:] != (3, 3, 3):
            raise ShapeError(f"kernel must be (c_out, c_in, 3, 3, 3), got {self.kernel.shape}")
        if self.bias.shape != (self.kernel.shape[0],):
            raise ShapeError(f"bias shape {self.bias.shape} does not match c_out {self.kernel.shape[0]}")
        if int(self.dilation) < 1:
            raise ShapeError(f"dilation must be positive, got {self.dilation}")


def conv3d_dilated(x, p):
    """Shape-preserving dilated 3x3x3 convolution (zero padding of width d)."""
    return conv3d(x, p.kernel, p.bias, stride=1, dilation=p.dilation, padding=p.dilation)


def conv3d_dilated_backward(x, p, g):
    return conv3d_backward(g, x, p.kernel, stride=1, dilation=p.dilation, padding=p.dilation)


def conv1x1(x, weight, bias):
    """Per-position channel mixing: weight (c_out, c_in), bias (c_out,)."""
    _check_volume(x, weight.shape[1], "conv1x1")
    y = np.tensordot(weight, x, axes=1) + bias[:, None, None, None]
    return ensure_finite("conv1x1 output", y)


def conv1x1_backward(g, x, weight):
    c_out, c_in = weight.shape
    grad_x = np.tensordot(weight.T, g, axes=1)
    grad_w = g.reshape(c_out, -1) @ x.reshape(c_in, -1).T
    grad_b = g.reshape(c_out, -1).sum(axis=1)
    return grad_x, grad_w, grad_b


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(g, x):
    return g * (x > 0.0)


def concat_channels(parts):
    return np.concatenate(parts, axis=0)


def split_channels(g, sizes):
    if sum(sizes) != g.shape[0]:
        raise ShapeError(f"split sizes {sizes} do not cover {g.shape[0]} channels")
    out = []
    start = 0
    for size in sizes:
        out.append(g[start : start + size])
        start += size
    return out


def avgpool_hw(x):
    """2x2 mean pooling over (h, w); t is preserved.  Extents must be even."""
    c, t, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avgpool_hw needs even spatial extents, got {h}x{w}")
    return x.reshape(c, t, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def avgpool_hw_backward(g):
    return np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25


def upsample_hw(x):
    """Nearest-neighbour 2x upsampling over (h, w)."""
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)


def upsample_hw_backward(g):
    c, t, h, w = g.shape
    if h % 2 or w % 2:
        raise ShapeError(f"upsample_hw_backward needs even extents, got {h}x{w}")
    return g.reshape(c, t, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def temporal_conv(x, weight, bias):
    """Per-channel 1D convolution along t with kernel 3 and edge padding.

    weight: (c, 3) taps ordered (previous, current, next); bias: (c,).
    At identity initialisation (taps 0,1,0 and zero bias) the output equals
    the input exactly, for any clip length.  Edge replication keeps the
    first and last frames norm-preserving under averaging taps; zero
    padding would dim them and learned side taps would then smear clip
    boundaries.
    """
    c, t, h, w = x.shape
    if weight.shape != (c, 3) or bias.shape != (c,):
        raise ShapeError(f"temporal_conv: weight {weight.shape} / bias {bias.shape} for {c} channels")
    padded = np.pad(x, ((0, 0), (1, 1), (0, 0), (0, 0)), mode="edge")
    y = (
        weight[:, 0, None, None, None] * padded[:, :t]
        + weight[:, 1, None, None, None] * padded[:, 1 : t + 1]
        + weight[:, 2, None, None, None] * padded[:, 2 : t + 2]
        + bias[:, None, None, None]
    )
    return ensure_finite("temporal_conv output", y)


def temporal_conv_backward(g, x, weight):
    c, t, h, w = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (0, 0), (0, 0)), mode="edge")
    grad_w = np.empty_like(weight)
    grad_w[:, 0] = (g * padded[:, :t]).sum(axis=(1, 2, 3))
    grad_w[:, 1] = (g * padded[:, 1 : t + 1]).sum(axis=(1, 2, 3))
    grad_w[:, 2] = (g * padded[:, 2 : t + 2]).sum(axis=(1, 2, 3))
    grad_b = g.sum(axis=(1, 2, 3))
    grad_padded = np.zeros_like(padded)
    grad_padded[:, :t] += weight[:, 0, None, None, None] * g
    grad_padded[:, 1 : t + 1] += weight[:, 1, None, None, None] * g
    grad_padded[:, 2 : t + 2] += weight[:, 2, None, None, None] * g
    g_x = grad_padded[:, 1 : t + 1].copy()
    # Replicated edges fold their gradient back onto the boundary frames.
    g_x[:, 0] += grad_padded[:, 0]
    g_x[:, -1] += grad_padded[:, t + 1]
    return g_x, grad_w, grad_b


def global_mean(x):
    """Mean over (t, h, w), returning a (c,) vector."""
    return x.mean(axis=(1, 2, 3))


def global_mean_backward(g, shape):
    c, t, h, w = shape
    scale = 1.0 / (t * h * w)
    return np.broadcast_to(g[:, None, None, None] * scale, shape).copy()
