"""Command-line entry point.

Subcommands: preprocess, train, sample, eval, gradcheck, ablate.  Flag
values win over SIGNSYNTH_* environment variables, which win over the
config file.  --threads pins the BLAS pool before numpy is imported, so
this module must stay free of heavy imports at module level.
"""

import argparse
import json
import os
import sys


def _build_parser():
    parser = argparse.ArgumentParser(prog="signsynth", description=__doc__)
    parser.add_argument("--config", default=None, help="JSON run config")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--threads", type=int, default=None, help="BLAS thread count (default 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="PNG clip directory -> modality bundle")
    p.add_argument("--clip", required=True, help="directory with frames and manifest.json")

    p = sub.add_parser("train", help="train phase 1 or 2")
    p.add_argument("--phase", type=int, choices=(1, 2), required=True)
    p.add_argument("--init", default=None, help="phase-1 checkpoint dir (required for phase 2)")

    p = sub.add_parser("sample", help="sample a clip from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--bundle", default=None, help="bundle dir for conditioning (default: synthetic)")

    p = sub.add_parser("eval", help="score prediction clips against targets")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)

    sub.add_parser("gradcheck", help="finite-difference gradient verification")

    p = sub.add_parser("ablate", help="condition-term toggles and motion weight sweep")
    p.add_argument("--train", action="store_true", help="train each variant at desk scale")

    return parser


def _env_default(name, cast, fallback):
    raw = os.environ.get(name)
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except ValueError:
        print(f"warning: ignoring bad {name}={raw!r}", file=sys.stderr)
        return fallback


def _pin_threads(n):
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
    ):
        os.environ[var] = str(n)


def main(argv=None):
    args = _build_parser().parse_args(argv)

    # Precedence: flag > environment > config file.
    threads = args.threads
    if threads is None:
        threads = _env_default("SIGNSYNTH_THREADS", int, None)
    seed = args.seed
    if seed is None:
        seed = _env_default("SIGNSYNTH_SEED", int, None)
    out = args.out
    if out is None:
        out = os.environ.get("SIGNSYNTH_OUT")

    # Threads must be pinned before numpy binds its BLAS pool.
    _pin_threads(threads if threads is not None else 1)

    from .config import apply_seed_override, fingerprint, load_run_config

    overrides = {}
    if out is not None:
        overrides["out"] = out
    if threads is not None:
        overrides["threads"] = threads
    cfg = load_run_config(args.config, overrides)
    cfg = apply_seed_override(cfg, seed)
    _pin_threads(cfg.threads)
    os.makedirs(cfg.out, exist_ok=True)

    handler = {
        "preprocess": _cmd_preprocess,
        "train": _cmd_train,
        "sample": _cmd_sample,
        "eval": _cmd_eval,
        "gradcheck": _cmd_gradcheck,
        "ablate": _cmd_ablate,
    }[args.command]
    return handler(cfg, args)


def _dataset(cfg):
    from .model import load_bundle
    from .synthetic import SyntheticClipSpec, SyntheticDataset

    if cfg.data.kind == "bundle_dir":
        bundle = load_bundle(cfg.data.path)
        return [bundle]
    spec = SyntheticClipSpec(size=cfg.data.size, frames=cfg.data.frames, seed=cfg.data.seed)
    return SyntheticDataset(spec, cfg.data.count)


def _cmd_preprocess(cfg, args):
    from .preprocess import preprocess_clip

    size = (cfg.preprocess.size, cfg.preprocess.size) if cfg.preprocess.size else None
    out_dir = os.path.join(cfg.out, "bundle")
    sidecar = preprocess_clip(
        args.clip, out_dir, n_frames=cfg.preprocess.subsample, seed=cfg.preprocess.seed, size=size
    )
    sidecar["fingerprint"] = fingerprint_of(cfg)
    with open(os.path.join(out_dir, "sidecar.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    print(f"wrote bundle to {out_dir} ({len(sidecar['frame_indices'])} frames)")
    return 0


def fingerprint_of(cfg):
    from .config import fingerprint

    return fingerprint(cfg)


def _cmd_train(cfg, args):
    from .model import SignDiffusionModel
    from .training import train_phase1, train_phase2

    model = SignDiffusionModel(cfg.model)
    dataset = _dataset(cfg)
    manifest_extra = {"fingerprint": fingerprint_of(cfg)}
    phase_dir = os.path.join(cfg.out, f"phase{args.phase}")
    log_path = os.path.join(cfg.out, f"phase{args.phase}_log.jsonl")
    if args.phase == 1:
        result = train_phase1(
            model, dataset, cfg.phase1, out_dir=phase_dir, log_path=log_path, manifest_extra=manifest_extra
        )
    else:
        if not args.init:
            raise SystemExit("phase 2 requires --init pointing at a phase-1 checkpoint")
        result = train_phase2(
            model, dataset, cfg.phase2, args.init, out_dir=phase_dir, log_path=log_path,
            manifest_extra=manifest_extra,
        )
    print(f"phase {args.phase} done: loss_ema={result.loss_ema:.6f} checkpoint={result.checkpoint}")
    return 0


def _cmd_sample(cfg, args):
    from . import sgt1
    from .model import ModelConfig, SignDiffusionModel
    from .sampler import ddpm_sample
    from .training import load_checkpoint

    params, manifest = load_checkpoint(args.ckpt)
    model = SignDiffusionModel(ModelConfig(**manifest["model"]))
    dataset = _dataset(cfg)
    bundle = dataset[0]
    cond, app, _ = model.condition_forward(params, bundle)
    z = ddpm_sample(cond, app, params, model, cfg.sample.seed)
    clip = model.codec.decode(z)
    out_dir = os.path.join(cfg.out, "samples")
    os.makedirs(out_dir, exist_ok=True)
    sgt1.write_sgt1(os.path.join(out_dir, "sample.sgt1"), clip)
    _dump_frames(out_dir, clip)
    print(f"wrote sample.sgt1 and {clip.shape[1]} PNG frames to {out_dir}")
    return 0


def _dump_frames(out_dir, clip):
    import numpy as np
    from PIL import Image

    for k in range(clip.shape[1]):
        frame = np.clip(clip[:, k], 0.0, 1.0).transpose(1, 2, 0)
        Image.fromarray((frame * 255.0).round().astype(np.uint8)).save(
            os.path.join(out_dir, f"frame_{k:04d}.png")
        )


def _cmd_eval(cfg, args):
    from . import sgt1
    from .errors import ConfigError
    from .metrics import make_perceptual_stub, make_report, write_report

    def clips_in(d):
        return {f[: -len(".sgt1")]: os.path.join(d, f) for f in sorted(os.listdir(d)) if f.endswith(".sgt1")}

    pred, gt = clips_in(args.pred), clips_in(args.gt)
    if set(pred) != set(gt):
        raise ConfigError(
            f"prediction/target clip sets differ: {sorted(set(pred) ^ set(gt))}"
        )
    if not pred:
        raise ConfigError("no .sgt1 clips found")
    stub = make_perceptual_stub(seed=cfg.metrics.perceptual_seed)
    pairs = [(name, sgt1.read_sgt1(pred[name]), sgt1.read_sgt1(gt[name])) for name in sorted(pred)]
    report = make_report(
        "eval", pairs, stub, fingerprint=fingerprint_of(cfg),
        peak=cfg.metrics.peak, window=cfg.metrics.window, k1=cfg.metrics.k1, k2=cfg.metrics.k2,
    )
    base = os.path.join(cfg.out, "report")
    write_report(report, base)
    print(f"wrote {base}.json/.csv/.md  mean psnr={report.aggregate['psnr']:.4f} dB")
    return 0


def _cmd_gradcheck(cfg, args):
    from .gradsuite import run_gradient_suite

    results = run_gradient_suite()
    failed = False
    for name, err, tol in results:
        ok = err < tol
        failed = failed or not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: max rel err {err:.3e} (tol {tol:.0e})")
    return 1 if failed else 0


def _cmd_ablate(cfg, args):
    from .ablate import run_ablation

    if not args.train:
        raise SystemExit("desk-scale ablation needs --train (no pretrained checkpoints are shipped)")
    out_dir = os.path.join(cfg.out, "ablation")
    run_ablation(cfg, out_dir, train=True, progress=lambda msg: print(msg))
    print(f"wrote ablation tables to {out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
