"""Brute-force reference implementations used to pin expected values.

Everything here favours obviousness over speed: explicit loop nests,
direct formula transcriptions, no shared code with the package under
test beyond numpy itself.
"""

import numpy as np


def conv3d_loops(x, kernel, bias, stride=(1, 1, 1), dilation=(1, 1, 1), padding=(1, 1, 1)):
    """Direct loop-nest 3D convolution; zero padding; shape math inline."""
    c_in, n_t, n_h, n_w = x.shape
    c_out = kernel.shape[0]
    kt, kh, kw = kernel.shape[2:]
    st, sh, sw = stride
    dt, dh, dw = dilation
    pt, ph, pw = padding
    to = (n_t + 2 * pt - ((kt - 1) * dt + 1)) // st + 1
    ho = (n_h + 2 * ph - ((kh - 1) * dh + 1)) // sh + 1
    wo = (n_w + 2 * pw - ((kw - 1) * dw + 1)) // sw + 1
    out = np.zeros((c_out, to, ho, wo))
    for co in range(c_out):
        for ot in range(to):
            for oh in range(ho):
                for ow in range(wo):
                    acc = bias[co]
                    for ci in range(c_in):
                        for a in range(kt):
                            for b in range(kh):
                                for c in range(kw):
                                    it = ot * st + a * dt - pt
                                    ih = oh * sh + b * dh - ph
                                    iw = ow * sw + c * dw - pw
                                    if 0 <= it < n_t and 0 <= ih < n_h and 0 <= iw < n_w:
                                        acc += x[ci, it, ih, iw] * kernel[co, ci, a, b, c]
                    out[co, ot, oh, ow] = acc
    return out


def conv1x1_loops(x, weight, bias):
    c_out = weight.shape[0]
    out = np.zeros((c_out,) + x.shape[1:])
    for co in range(c_out):
        out[co] = bias[co]
        for ci in range(x.shape[0]):
            out[co] += weight[co, ci] * x[ci]
    return out


def temporal_conv_loops(x, weight, bias):
    """Per-channel kernel-3 conv along the frame axis, edge replicated."""
    c, n_t = x.shape[0], x.shape[1]
    out = np.zeros_like(x)
    for ci in range(c):
        for k in range(n_t):
            acc = np.full(x.shape[2:], bias[ci])
            for tap, off in enumerate((-1, 0, 1)):
                j = min(max(k + off, 0), n_t - 1)
                acc = acc + weight[ci, tap] * x[ci, j]
            out[ci, k] = acc
    return out


def patch_vectors(image, p):
    """(patch-row, patch-col) -> flattened (c, dy, dx) pixel vector, C order."""
    c, h, w = image.shape
    rows = []
    for py in range(h // p):
        cols = []
        for px in range(w // p):
            block = image[:, py * p:(py + 1) * p, px * p:(px + 1) * p]
            cols.append(block.reshape(-1))
        rows.append(cols)
    return np.asarray(rows)


def box_union_area(boxes):
    """Inclusion-exclusion area of up to three half-open (x0, y0, x1, y1) boxes."""

    def area(b):
        return max(0, b[2] - b[0]) * max(0, b[3] - b[1])

    def inter(a, b):
        return (
            max(a[0], b[0]),
            max(a[1], b[1]),
            min(a[2], b[2]),
            min(a[3], b[3]),
        )

    total = sum(area(b) for b in boxes)
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            total -= area(inter(boxes[i], boxes[j]))
    if len(boxes) == 3:
        total += area(inter(inter(boxes[0], boxes[1]), boxes[2]))
    return total


def pca_top_component(points):
    """Top principal axis of (n, d) points via SVD of the centred data.

    Independent route: the implementation under test diagonalises the
    population covariance; this one never forms it.
    """
    mean = points.mean(axis=0)
    centred = points - mean
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    comp = vt[0]
    k = int(np.argmax(np.abs(comp)))
    if comp[k] < 0:
        comp = -comp
    eigenvalue = (s[0] ** 2) / points.shape[0]
    return mean, comp, eigenvalue


def ssim_direct(x, y, peak=1.0, window=8, k1=0.01, k2=0.03):
    """Sliding-window SSIM with explicit per-window statistics."""
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    vals = []
    for ci in range(x.shape[0]):
        for t in range(x.shape[1]):
            xf, yf = x[ci, t], y[ci, t]
            for i in range(x.shape[2] - window + 1):
                for j in range(x.shape[3] - window + 1):
                    a = xf[i:i + window, j:j + window].ravel()
                    b = yf[i:i + window, j:j + window].ravel()
                    mx, my = a.mean(), b.mean()
                    vx, vy = a.var(), b.var()
                    cov = ((a - mx) * (b - my)).mean()
                    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
                    cs = (2 * cov + c2) / (vx + vy + c2)
                    vals.append(lum * cs)
    return float(np.mean(vals))


def adamw_reference(p0, grad_fn, lr, wd, steps, beta1=0.9, beta2=0.999, eps=1e-8):
    """Scalar AdamW trajectory, decoupled decay, bias-corrected moments."""
    p, m, v = float(p0), 0.0, 0.0
    for k in range(1, steps + 1):
        g = grad_fn(p)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mh = m / (1 - beta1 ** k)
        vh = v / (1 - beta2 ** k)
        p = p - lr * wd * p - lr * mh / (vh ** 0.5 + eps)
    return p


def gaussian_blob_mask(size, cy, cx, radius):
    """Boolean disc r^2 < radius^2 on an integer grid."""
    yy, xx = np.mgrid[0:size, 0:size]
    return (yy - cy) ** 2 + (xx - cx) ** 2 < radius ** 2
