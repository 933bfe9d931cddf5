import os
import time
from types import SimpleNamespace

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def overfit_run(tmp_path_factory):
    """Two-stage single-clip overfit at full width; trained once per session.

    Shared by the overfit acceptance check and the phase-2 smoothness test,
    since the training run is by far the most expensive piece of the suite.
    Stage 1 drops periodic checkpoints so other tests can pick up the model
    mid-training without paying for a second run.
    """
    from signsynth.model import ModelConfig, SignDiffusionModel
    from signsynth.synthetic import SyntheticClipSpec, SyntheticDataset
    from signsynth.training import TrainConfig, train_phase1

    out = str(tmp_path_factory.mktemp("overfit"))
    model = SignDiffusionModel(ModelConfig())
    dataset = SyntheticDataset(SyntheticClipSpec(size=32, frames=8, seed=0), 1)
    started = time.monotonic()
    stage1 = train_phase1(
        model, dataset, TrainConfig(1, 1400, 4, 1e-3, 1e-2, 8, seed=0, checkpoint_every=400),
        out_dir=out,
    )
    stage2 = train_phase1(
        model, dataset, TrainConfig(1, 600, 4, 3e-4, 1e-2, 8, seed=1, checkpoint_every=0),
        params=stage1.params,
    )
    return SimpleNamespace(
        model=model,
        dataset=dataset,
        initial_ema=stage1.initial_ema,
        final_ema=stage2.loss_ema,
        iterations=len(stage1.losses) + len(stage2.losses),
        params=stage2.params,
        early_ckpt=os.path.join(out, "ckpt_000400"),
        train_seconds=time.monotonic() - started,
    )
