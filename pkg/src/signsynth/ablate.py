"""Ablation workflow: toggle the condition terms and sweep the motion weight.

Produces two tables.  The module table compares the plain modality-sum
baseline against adding the motion aggregate and then the foundation
features; the weight table sweeps the motion scale over (1.0, 0.1, 0.01).
Desk-scale runs are tiny and their absolute numbers are not comparable to
full-scale training.
"""

import os
from dataclasses import replace

from .metrics import make_perceptual_stub, make_report, render_markdown, report_rows
from .model import SignDiffusionModel
from .sampler import ddpm_sample
from .synthetic import SyntheticClipSpec, SyntheticDataset
from .training import train_phase1

LAMBDA_GRID = (1.0, 0.1, 0.01)

MODULE_ROWS = (
    ("baseline", False, False),
    ("+motion", True, False),
    ("+motion+foundation", True, True),
)


def ablation_variants(lam_default=0.01):
    """Deduplicated (label, enable_motion, enable_foundation, lam) runs."""
    variants = []
    for label, motion, foundation in MODULE_ROWS:
        variants.append((label, motion, foundation, lam_default))
    for lam in LAMBDA_GRID:
        label = f"+motion (weight={lam})"
        variants.append((label, True, False, lam))
    return variants


def run_ablation(run_cfg, out_dir, train=True, progress=None):
    """Train, sample, and score every ablation variant; returns table rows."""
    os.makedirs(out_dir, exist_ok=True)
    data_cfg = run_cfg.data
    spec = SyntheticClipSpec(size=data_cfg.size, frames=data_cfg.frames, seed=data_cfg.seed)
    dataset = SyntheticDataset(spec, data_cfg.count)
    stub = make_perceptual_stub(
        c_img=run_cfg.model.c_img, seed=run_cfg.metrics.perceptual_seed
    )

    reports = []
    cache = {}
    for label, motion, foundation, lam in ablation_variants(run_cfg.model.lambda_motion):
        key = (motion, foundation, lam)
        if key in cache:
            report = replace_method(cache[key], label)
            reports.append(report)
            continue
        if progress:
            progress(f"ablation variant {label!r}: training")
        model_cfg = replace(
            run_cfg.model, enable_motion=motion, enable_foundation=foundation, lambda_motion=lam
        )
        model = SignDiffusionModel(model_cfg)
        result = train_phase1(model, dataset, run_cfg.phase1)
        pairs = []
        for i in range(len(dataset)):
            bundle = dataset[i]
            cond, app, _ = model.condition_forward(result.params, bundle)
            z = ddpm_sample(cond, app, result.params, model, run_cfg.sample.seed + i)
            pairs.append((f"clip{i}", model.codec.decode(z), bundle.target_clip))
        report = make_report(
            label,
            pairs,
            stub,
            peak=run_cfg.metrics.peak,
            window=run_cfg.metrics.window,
            k1=run_cfg.metrics.k1,
            k2=run_cfg.metrics.k2,
        )
        cache[key] = report
        reports.append(report)

    module_reports = reports[: len(MODULE_ROWS)]
    lam_reports = reports[len(MODULE_ROWS) :]
    md = "## condition terms\n\n" + render_markdown(module_reports)
    md += "\n## motion weight sweep\n\n" + render_markdown(lam_reports)
    with open(os.path.join(out_dir, "ablation.md"), "w") as fh:
        fh.write(md)
    _write_csv(os.path.join(out_dir, "ablation.csv"), reports)
    return reports


def replace_method(report, method):
    from .metrics import EvalReport

    return EvalReport(
        method=method, scores=report.scores, aggregate=report.aggregate, fingerprint=report.fingerprint
    )


def _write_csv(path, reports):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["method", "clip", "psnr", "ssim", "perceptual"])
        writer.writeheader()
        for report in reports:
            writer.writerows(report_rows(report))
