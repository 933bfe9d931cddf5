"""Two-phase training harness with bitwise-reproducible trajectories.

Phase 1 trains every spatial weight (encoders, aggregation, U-Net) with
temporal layers disabled; phase 2 trains only the temporal layers on
longer clips while the spatial weights stay bitwise frozen.  Batches and
noise draws derive from (seed, iteration, item) keys, so a run is a pure
function of its config and dataset.
"""

import json
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, TrainingDiverged
from .optim import adamw_init, adamw_step
from .params import clone_params, load_params, make_rng, save_params
from .unet import temporal_param_names

EMA_FACTOR = 0.99


@dataclass(frozen=True)
class TrainConfig:
    phase: int
    iterations: int
    batch_size: int
    lr: float
    weight_decay: float
    clip_len: int
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables periodic checkpoints
    max_grad_norm: float = 1.0  # 0 disables clipping
    desk_scale: bool = True

    def __post_init__(self):
        if self.phase not in (1, 2):
            raise ConfigError(f"phase must be 1 or 2, got {self.phase}")
        if self.iterations < 1 or self.batch_size < 1 or self.clip_len < 1:
            raise ConfigError("iterations, batch_size, and clip_len must be positive")
        # lr 0 is legal and freezes the run; it anchors the no-update contract
        if self.lr < 0.0 or self.weight_decay < 0.0:
            raise ConfigError("lr and weight_decay must be non-negative")
        if self.max_grad_norm < 0.0:
            raise ConfigError("max_grad_norm must be non-negative")

    @staticmethod
    def defaults(phase, desk_scale=True, seed=0):
        """Reference presets: full-scale numbers, or a laptop-sized regime."""
        if desk_scale:
            if phase == 1:
                return TrainConfig(1, 800, 4, 1e-3, 1e-2, 8, seed=seed, checkpoint_every=0)
            return TrainConfig(2, 150, 2, 1e-3, 1e-2, 24, seed=seed, checkpoint_every=0, desk_scale=True)
        if phase == 1:
            return TrainConfig(1, 30000, 64, 1e-5, 1e-2, 1, seed=seed, checkpoint_every=1000, desk_scale=False)
        return TrainConfig(2, 10000, 2, 1e-5, 1e-2, 24, seed=seed, checkpoint_every=1000, desk_scale=False)


def clip_grad_norm(grads, max_norm):
    """Scale grads in place to a global L2 norm of max_norm; returns the raw norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = total ** 0.5
    if max_norm > 0.0 and norm > max_norm:
        scale = max_norm / norm
        for name in grads:
            grads[name] = grads[name] * scale
    return norm


def trainable_names(params, phase):
    """Phase 1: everything but temporal layers.  Phase 2: temporal layers only."""
    temporal = set(temporal_param_names(params))
    if phase == 1:
        return sorted(name for name in params if name not in temporal)
    return sorted(temporal)


def save_checkpoint(dirpath, params, manifest):
    os.makedirs(dirpath, exist_ok=True)
    save_params(os.path.join(dirpath, "params"), params)
    with open(os.path.join(dirpath, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_checkpoint(dirpath):
    manifest_path = os.path.join(dirpath, "manifest.json")
    if not os.path.exists(manifest_path):
        raise ConfigError(f"no checkpoint manifest at {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    params = load_params(os.path.join(dirpath, "params"))
    return params, manifest


@dataclass
class TrainResult:
    params: dict
    losses: list
    loss_ema: float
    initial_ema: float
    checkpoint: str | None


def _draws_for(model, shape, tcfg, iteration, j):
    rng = make_rng("train-draw", tcfg.seed, iteration, j)
    t = int(rng.integers(1, model.sched.steps + 1))
    eps = rng.standard_normal(shape)
    return t, eps


def _run_phase(model, params, dataset, tcfg, out_dir, log_path, extra_manifest):
    temporal_enabled = tcfg.phase == 2
    names = trainable_names(params, tcfg.phase)
    state = adamw_init(params, names, tcfg.lr, tcfg.weight_decay)
    latent_shape = None
    losses = []
    ema = None
    initial_ema = None
    log_fh = open(log_path, "w") if log_path else None
    started = time.monotonic()
    try:
        for it in range(tcfg.iterations):
            rng = make_rng("train-batch", tcfg.seed, it)
            idx = [int(i) for i in rng.integers(0, len(dataset), size=tcfg.batch_size)]
            bundles = [dataset[i] for i in idx]
            if latent_shape is None:
                latent_shape = model.codec.encode(bundles[0].target_clip).shape
            draws = [_draws_for(model, latent_shape, tcfg, it, j) for j in range(len(bundles))]
            try:
                loss, grads = model.training_loss_and_grads(params, bundles, draws, temporal_enabled)
            except ArithmeticError as exc:
                ckpt = _abort_checkpoint(out_dir, params, tcfg, extra_manifest, it)
                raise TrainingDiverged(f"non-finite loss at iteration {it}", checkpoint=ckpt) from exc
            if not np.isfinite(loss):
                ckpt = _abort_checkpoint(out_dir, params, tcfg, extra_manifest, it)
                raise TrainingDiverged(f"non-finite loss at iteration {it}", checkpoint=ckpt)
            clip_grad_norm(grads, tcfg.max_grad_norm)
            adamw_step(params, grads, state)
            ema = loss if ema is None else EMA_FACTOR * ema + (1.0 - EMA_FACTOR) * loss
            losses.append(loss)
            # Average the opening iterations so one lucky timestep draw
            # cannot skew the reference level the run is judged against.
            if initial_ema is None and len(losses) >= min(25, tcfg.iterations):
                initial_ema = float(np.mean(losses))
            if initial_ema is not None and ema > 1e3 * initial_ema:
                ckpt = _abort_checkpoint(out_dir, params, tcfg, extra_manifest, it)
                raise TrainingDiverged(f"loss diverged at iteration {it}", checkpoint=ckpt)
            if log_fh:
                log_fh.write(
                    json.dumps(
                        {
                            "iteration": it,
                            "phase": tcfg.phase,
                            "loss": loss,
                            "loss_ema": ema,
                            "wall_time": time.monotonic() - started,
                        }
                    )
                    + "\n"
                )
            if out_dir and tcfg.checkpoint_every and (it + 1) % tcfg.checkpoint_every == 0:
                _write_ckpt(os.path.join(out_dir, f"ckpt_{it + 1:06d}"), params, tcfg, extra_manifest, it + 1, ema)
    finally:
        if log_fh:
            log_fh.close()
    final = None
    if out_dir:
        final = os.path.join(out_dir, "ckpt_final")
        _write_ckpt(final, params, tcfg, extra_manifest, tcfg.iterations, ema)
    return TrainResult(params=params, losses=losses, loss_ema=ema, initial_ema=initial_ema, checkpoint=final)


def _write_ckpt(dirpath, params, tcfg, extra_manifest, iteration, ema):
    manifest = {
        "phase": tcfg.phase,
        "iteration": iteration,
        "loss_ema": ema,
        "train": asdict(tcfg),
    }
    manifest.update(extra_manifest)
    save_checkpoint(dirpath, params, manifest)


def _abort_checkpoint(out_dir, params, tcfg, extra_manifest, iteration):
    if not out_dir:
        return None
    path = os.path.join(out_dir, "ckpt_diverged")
    # Parameters predate the non-finite update; for a growth trip they are
    # simply the most recent state worth salvaging.
    _write_ckpt(path, params, tcfg, extra_manifest, iteration, None)
    return path


def _model_manifest(model, extra=None):
    manifest = {
        "model": asdict(model.cfg),
        "schedule": {
            "steps": model.sched.steps,
            "beta_start": float(model.sched.betas[0]),
            "beta_end": float(model.sched.betas[-1]),
        },
    }
    if extra:
        manifest.update(extra)
    return manifest


def train_phase1(model, dataset, tcfg, params=None, out_dir=None, log_path=None, manifest_extra=None):
    if tcfg.phase != 1:
        raise ConfigError(f"train_phase1 got phase {tcfg.phase}")
    if params is None:
        params = model.init_params(tcfg.seed)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    return _run_phase(model, params, dataset, tcfg, out_dir, log_path, _model_manifest(model, manifest_extra))


def train_phase2(model, dataset, tcfg, init, out_dir=None, log_path=None, manifest_extra=None):
    """``init`` is a phase-1 checkpoint directory or a parameter dict."""
    if tcfg.phase != 2:
        raise ConfigError(f"train_phase2 got phase {tcfg.phase}")
    if isinstance(init, (str, os.PathLike)):
        params, manifest = load_checkpoint(init)
        if manifest.get("phase") != 1:
            raise ConfigError(f"phase-2 training needs a phase-1 checkpoint, got phase {manifest.get('phase')}")
        params = clone_params(params)
    elif isinstance(init, dict):
        params = clone_params(init)
    else:
        raise ConfigError("init must be a checkpoint directory or a parameter dict")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    return _run_phase(model, params, dataset, tcfg, out_dir, log_path, _model_manifest(model, manifest_extra))
