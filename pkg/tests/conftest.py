import time
from dataclasses import dataclass

import numpy as np
import pytest
import torch

torch.set_num_threads(1)

from qarest.dataio import CorpusManifest, PatchSpec, save_image
from qarest.model import ModelConfig
from qarest.trainer import FitResult, LoggingConfig, OptimizerConfig, RunConfig, fit

from helpers import textured_image


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """12 synthetic 160x192 images split 8 train / 4 val, plus the manifest."""
    root = tmp_path_factory.mktemp("corpus")
    rng = np.random.default_rng(21)
    for i in range(12):
        save_image(root / f"img_{i:02d}.png", textured_image(rng, 160, 192))
    entries = [(f"img_{i:02d}.png", "train" if i < 8 else "val") for i in range(12)]
    manifest = CorpusManifest(name="synthetic", root=str(root), seed=0, entries=entries)
    manifest_path = root / "manifest.json"
    manifest.save(manifest_path)
    return manifest, str(manifest_path)


@dataclass
class SmokeRun:
    """Artifacts of the session's shared smoke training.

    Trained in two phases (300 steps, then resume to 2000) so the 300-step
    wall time is measured directly; resuming is bitwise-faithful, so the
    combined trajectory equals one uninterrupted 2000-step run.
    """

    manifest: CorpusManifest
    manifest_path: str
    model_config: ModelConfig
    out_dir: str
    train_log: str
    checkpoint_300: str
    checkpoint_2000: str
    seconds_to_300: float
    seconds_to_2000: float
    result_300: FitResult
    result_2000: FitResult


SMOKE_MODEL = ModelConfig(base_channels=16, res_blocks_per_stage=2)


@pytest.fixture(scope="session")
def smoke_run(corpus, tmp_path_factory):
    manifest, manifest_path = corpus
    out = tmp_path_factory.mktemp("smoke_run")
    common = dict(
        model=SMOKE_MODEL,
        manifest_path=manifest_path,
        patch=PatchSpec(patch_size=64, batch_size=16),
        data_seed=5,
        seed=12,
        deterministic=True,
    )
    t0 = time.monotonic()
    run300 = RunConfig(
        optimizer=OptimizerConfig(total_steps=300),
        logging=LoggingConfig(out_dir=str(out), log_interval=1, checkpoint_interval=300, val_interval=300, val_qf=10),
        **common,
    )
    res300 = fit(run300)
    seconds_to_300 = time.monotonic() - t0
    run2000 = RunConfig(
        optimizer=OptimizerConfig(total_steps=2000),
        logging=LoggingConfig(out_dir=str(out), log_interval=1, checkpoint_interval=1000, val_interval=500, val_qf=10),
        **common,
    )
    res2000 = fit(run2000, resume_from=res300.final_checkpoint)
    seconds_to_2000 = time.monotonic() - t0
    return SmokeRun(
        manifest=manifest,
        manifest_path=manifest_path,
        model_config=SMOKE_MODEL,
        out_dir=str(out),
        train_log=res2000.train_log,
        checkpoint_300=res300.final_checkpoint,
        checkpoint_2000=res2000.final_checkpoint,
        seconds_to_300=seconds_to_300,
        seconds_to_2000=seconds_to_2000,
        result_300=res300,
        result_2000=res2000,
    )


def read_loss_column(train_log: str) -> list[float]:
    rows = open(train_log, encoding="utf-8").read().strip().split("\n")
    assert rows[0] == "step,lr,total,l1,ssim_term"
    return [float(r.split(",")[2]) for r in rows[1:]]
