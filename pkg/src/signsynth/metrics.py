"""Image and clip quality metrics plus evaluation reports.

PSNR uses a 99 dB cap as the zero-error sentinel.  SSIM slides a uniform
8x8 window with the standard stabilising constants.  The perceptual
distance compares frozen random-filter conv features, so its absolute
scale is not comparable to metrics backed by pretrained networks.
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .encoders import FoundationStub, stub_apply
from .errors import ShapeError

PSNR_CAP_DB = 99.0


def _as_frames(x):
    """Normalize (h, w) / (c, h, w) / (c, t, h, w) to (c, t, h, w)."""
    if x.ndim == 2:
        return x[None, None]
    if x.ndim == 3:
        return x[:, None]
    if x.ndim == 4:
        return x
    raise ShapeError(f"expected 2-4 dims, got shape {x.shape}")


def psnr(x, y, peak=1.0):
    """10*log10(peak^2 / mse), capped at the 99 dB sentinel."""
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {y.shape}")
    if peak <= 0.0:
        raise ShapeError(f"peak must be positive, got {peak}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(peak * peak / mse), PSNR_CAP_DB)


def _window_moments(x, y, window):
    """Uniform-window means, variances, and covariance, stacked over frames/channels."""
    from numpy.lib.stride_tricks import sliding_window_view

    xf = _as_frames(x)
    yf = _as_frames(y)
    if xf.shape[2] < window or xf.shape[3] < window:
        raise ShapeError(f"extents {xf.shape[2:]} smaller than SSIM window {window}")
    ws = (window, window)
    mux, muy, vx, vy, cov = [], [], [], [], []
    for c in range(xf.shape[0]):
        for t in range(xf.shape[1]):
            wx = sliding_window_view(xf[c, t], ws)
            wy = sliding_window_view(yf[c, t], ws)
            mx = wx.mean(axis=(2, 3))
            my = wy.mean(axis=(2, 3))
            mux.append(mx)
            muy.append(my)
            vx.append((wx * wx).mean(axis=(2, 3)) - mx * mx)
            vy.append((wy * wy).mean(axis=(2, 3)) - my * my)
            cov.append((wx * wy).mean(axis=(2, 3)) - mx * my)
    return (np.stack(mux), np.stack(muy), np.stack(vx), np.stack(vy), np.stack(cov))


def ssim(x, y, window=8, k1=0.01, k2=0.03, peak=1.0):
    """Mean structural similarity over all uniform windows, frames, and channels."""
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {y.shape}")
    mux, muy, vx, vy, cov = _window_moments(x, y, window)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    lum = (2.0 * mux * muy + c1) / (mux * mux + muy * muy + c1)
    cs = (2.0 * cov + c2) / (vx + vy + c2)
    return float(np.mean(lum * cs))


def ssim_components(x, y, window=8, k1=0.01, k2=0.03, peak=1.0):
    """Mean (luminance, contrast, structure) terms of the SSIM decomposition."""
    mux, muy, vx, vy, cov = _window_moments(x, y, window)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    c3 = c2 / 2.0
    sx = np.sqrt(np.maximum(vx, 0.0))
    sy = np.sqrt(np.maximum(vy, 0.0))
    lum = (2.0 * mux * muy + c1) / (mux * mux + muy * muy + c1)
    con = (2.0 * sx * sy + c2) / (vx + vy + c2)
    struct = (cov + c3) / (sx * sy + c3)
    return float(np.mean(lum)), float(np.mean(con)), float(np.mean(struct))


DEFAULT_PERCEPTUAL_SEED = 555


def make_perceptual_stub(c_img=3, hidden=8, c_out=8, seed=DEFAULT_PERCEPTUAL_SEED):
    return FoundationStub.create(seed, c_img, hidden, c_out)


def perceptual_distance(x, y, stub):
    """Mean squared distance between frozen random conv features of x and y."""
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {y.shape}")
    xf = x[:, None] if x.ndim == 3 else x
    yf = y[:, None] if y.ndim == 3 else y
    fx, _ = stub_apply(xf, stub)
    fy, _ = stub_apply(yf, stub)
    return float(np.mean((fx - fy) ** 2))


@dataclass
class ClipScore:
    name: str
    psnr: float
    ssim: float
    perceptual: float


@dataclass
class EvalReport:
    method: str
    scores: list
    aggregate: dict
    fingerprint: str


def make_report(method, pairs, stub, fingerprint="", peak=1.0, window=8, k1=0.01, k2=0.03):
    """Score (name, prediction, target) clip pairs and aggregate by arithmetic mean."""
    if not pairs:
        raise ShapeError("cannot build a report from zero clips")
    scores = [
        ClipScore(
            name=name,
            psnr=psnr(pred, gt, peak),
            ssim=ssim(pred, gt, window, k1, k2, peak),
            perceptual=perceptual_distance(pred, gt, stub),
        )
        for name, pred, gt in pairs
    ]
    aggregate = {
        "psnr": float(np.mean([s.psnr for s in scores])),
        "ssim": float(np.mean([s.ssim for s in scores])),
        "perceptual": float(np.mean([s.perceptual for s in scores])),
    }
    return EvalReport(method=method, scores=scores, aggregate=aggregate, fingerprint=fingerprint)


def report_rows(report):
    rows = [
        {
            "method": report.method,
            "clip": s.name,
            "psnr": s.psnr,
            "ssim": s.ssim,
            "perceptual": s.perceptual,
        }
        for s in report.scores
    ]
    rows.append(
        {
            "method": report.method,
            "clip": "mean",
            "psnr": report.aggregate["psnr"],
            "ssim": report.aggregate["ssim"],
            "perceptual": report.aggregate["perceptual"],
        }
    )
    return rows


def write_report(report, out_base):
    """Emit <base>.json, <base>.csv, and <base>.md renderings of one report."""
    payload = {
        "method": report.method,
        "fingerprint": report.fingerprint,
        "aggregate": report.aggregate,
        "clips": [
            {"name": s.name, "psnr": s.psnr, "ssim": s.ssim, "perceptual": s.perceptual}
            for s in report.scores
        ],
    }
    with open(out_base + ".json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    with open(out_base + ".csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["method", "clip", "psnr", "ssim", "perceptual"])
        writer.writeheader()
        writer.writerows(report_rows(report))
    with open(out_base + ".md", "w") as fh:
        fh.write(render_markdown([report]))
    return payload


def render_markdown(reports):
    lines = [
        "| method | clip | psnr (dB) | ssim | perceptual |",
        "| --- | --- | --- | --- | --- |",
    ]
    for report in reports:
        for row in report_rows(report):
            lines.append(
                f"| {row['method']} | {row['clip']} | {row['psnr']:.4f} "
                f"| {row['ssim']:.4f} | {row['perceptual']:.6f} |"
            )
    return "\n".join(lines) + "\n"
