"""Training loop: Adam with a halving learning-rate schedule, resumable
checkpoints, deterministic data streaming.

The optimizer state is owned here (per-parameter first/second moments in
plain dicts keyed by parameter name) so that checkpoints round-trip
bitwise and a resumed run reproduces the uninterrupted parameter
trajectory exactly. Batch k of the data stream is a pure function of
(data seed, k), so resuming at step k replays the identical batches.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np
import torch

from . import ckpt
from .dataio import CorpusManifest, DistortionSpec, PatchSpec, PatchSampler, codec_id, distort_jpeg, load_image
from .errors import CheckpointError, ConfigurationError, TrainingDivergedError
from .metrics import psnr
from .model import ModelConfig, RestorationNet, build_model
from .objective import LossReport, SsimParams, total_loss

logger = logging.getLogger(__name__)

TRAIN_LOG_NAME = "train_log.csv"
VAL_LOG_NAME = "val_log.csv"
RUN_META_NAME = "run.json"


@dataclass(frozen=True)
class OptimizerConfig:
    algorithm: str = "adam"
    lr0: float = 2e-4
    halving_period: int = 10_000
    lr_floor: float = 1.25e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    total_steps: int = 500_000
    clip_norm: float | None = None

    def validate(self) -> None:
        if self.algorithm != "adam":
            raise ConfigurationError(f"unsupported optimizer {self.algorithm!r}")
        if not self.lr0 >= self.lr_floor > 0:
            raise ConfigurationError(f"need lr0 >= lr_floor > 0, got lr0={self.lr0}, lr_floor={self.lr_floor}")
        if self.halving_period < 1:
            raise ConfigurationError(f"halving_period must be >= 1, got {self.halving_period}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")
        if self.total_steps < 0:
            raise ConfigurationError(f"total_steps must be >= 0, got {self.total_steps}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigurationError(f"clip_norm must be > 0 when set, got {self.clip_norm}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        return cls(**d)


def lr_at_step(step: int, cfg: OptimizerConfig) -> float:
    """max(lr0 * 0.5**(step // halving_period), lr_floor); step counts from 0."""
    if step < 0:
        raise ConfigurationError(f"step must be >= 0, got {step}")
    return max(cfg.lr0 * 0.5 ** (step // cfg.halving_period), cfg.lr_floor)


@dataclass
class TrainState:
    """Mutable training state: single-writer by contract.

    ``step`` counts completed optimizer steps; the moments dicts are keyed
    by parameter name and lazily match parameter shapes.
    """

    model: RestorationNet
    optimizer_config: OptimizerConfig
    step: int = 0
    seed: int = 0
    moments_m: dict[str, torch.Tensor] = field(default_factory=dict)
    moments_v: dict[str, torch.Tensor] = field(default_factory=dict)
    best_val_psnr: float | None = None
    rng_state: bytes | None = None

    def _moments_for(self, name: str, param: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if name not in self.moments_m:
            self.moments_m[name] = torch.zeros_like(param)
            self.moments_v[name] = torch.zeros_like(param)
        return self.moments_m[name], self.moments_v[name]


def new_train_state(model_config: ModelConfig, optimizer_config: OptimizerConfig, seed: int) -> TrainState:
    optimizer_config.validate()
    model = build_model(model_config, seed)
    return TrainState(model=model, optimizer_config=optimizer_config, seed=seed)


def _adam_update(state: TrainState, lr: float) -> None:
    cfg = state.optimizer_config
    t = state.step + 1
    bias1 = 1.0 - cfg.beta1**t
    bias2 = 1.0 - cfg.beta2**t
    with torch.no_grad():
        for name, p in state.model.named_parameters():
            g = p.grad
            if g is None:
                continue
            m, v = state._moments_for(name, p)
            m.mul_(cfg.beta1).add_(g, alpha=1.0 - cfg.beta1)
            v.mul_(cfg.beta2).addcmul_(g, g, value=1.0 - cfg.beta2)
            denom = (v / bias2).sqrt_().add_(cfg.epsilon)
            p.addcdiv_(m, denom, value=-lr / bias1)


def train_step(state: TrainState, batch, ssim_params: SsimParams | None = None) -> tuple[TrainState, LossReport]:
    """One forward/backward/Adam step on an aligned (compressed, pristine) batch.

    ``batch`` is (compressed, pristine) or (compressed, pristine, info)
    with numpy arrays or float32 tensors shaped (B, C, H, W). The state is
    updated in place and returned with the loss report. A non-finite loss
    aborts with the step, learning rate and batch identifiers.
    """
    compressed, pristine = batch[0], batch[1]
    info = batch[2] if len(batch) > 2 else None
    if isinstance(compressed, np.ndarray):
        compressed = torch.from_numpy(compressed)
    if isinstance(pristine, np.ndarray):
        pristine = torch.from_numpy(pristine)

    lr = lr_at_step(state.step, state.optimizer_config)
    out = state.model(compressed)
    report = total_loss(out.restored, pristine, ssim_params)
    if not torch.isfinite(report.total.detach()):
        raise TrainingDivergedError(
            f"non-finite loss {float(report.total.detach())} at step {state.step} (lr={lr!r}); batch: {info}"
        )
    state.model.zero_grad(set_to_none=True)
    report.total.backward()
    if state.optimizer_config.clip_norm is not None:
        torch.nn.utils.clip_grad_norm_(state.model.parameters(), state.optimizer_config.clip_norm)
    _adam_update(state, lr)
    state.step += 1
    return state, report


# ---------------------------------------------------------------------------
# checkpointing


def save_checkpoint(state: TrainState, path: str | Path, with_moments: bool = True) -> Path:
    """Write the checkpoint directory; parameter/moment round trips are bitwise."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    params = {name: p for name, p in state.model.named_parameters()}
    ckpt.write_tensor_dir(path / ckpt.PARAMS_DIR, params)
    if with_moments:
        for name, p in params.items():
            state._moments_for(name, p)
        ckpt.write_tensor_dir(path / ckpt.MOMENTS_M_DIR, state.moments_m)
        ckpt.write_tensor_dir(path / ckpt.MOMENTS_V_DIR, state.moments_v)
    state.rng_state = bytes(torch.get_rng_state().numpy().tobytes())
    (path / ckpt.RNG_STATE_NAME).write_bytes(state.rng_state)
    meta = {
        "format_version": ckpt.FORMAT_VERSION,
        "model_config": state.model.config.to_dict(),
        "optimizer_config": state.optimizer_config.to_dict(),
        "step": state.step,
        "seed": state.seed,
        "best_val_psnr": state.best_val_psnr,
        "has_moments": with_moments,
        "parameters": sorted(params),
    }
    ckpt.write_meta(path / ckpt.META_NAME, meta)
    return path


def load_checkpoint(path: str | Path, model_config: ModelConfig | None = None) -> TrainState:
    """Rebuild a TrainState from a checkpoint directory.

    ``model_config`` overrides the stored config (raising a shape error
    naming the first mismatched parameter if incompatible).
    """
    path = Path(path)
    meta = ckpt.read_meta(path)
    stored_config = ModelConfig.from_dict(meta["model_config"])
    config = model_config if model_config is not None else stored_config
    opt_config = OptimizerConfig.from_dict(meta["optimizer_config"])
    model = RestorationNet(config)
    ckpt.load_params_into(model, path)
    state = TrainState(
        model=model,
        optimizer_config=opt_config,
        step=int(meta["step"]),
        seed=int(meta["seed"]),
        best_val_psnr=meta.get("best_val_psnr"),
    )
    if meta.get("has_moments"):
        names = [name for name, _ in model.named_parameters()]
        state.moments_m = ckpt.read_tensor_dir(path / ckpt.MOMENTS_M_DIR, names)
        state.moments_v = ckpt.read_tensor_dir(path / ckpt.MOMENTS_V_DIR, names)
        for name, p in model.named_parameters():
            if state.moments_m[name].shape != p.shape:
                raise CheckpointError(f"moment blob {name!r} shape {tuple(state.moments_m[name].shape)} mismatch")
    rng_file = path / ckpt.RNG_STATE_NAME
    if rng_file.is_file():
        state.rng_state = rng_file.read_bytes()
    return state


def load_model(path: str | Path) -> tuple[RestorationNet, dict]:
    """Inference-side load: the model in eval mode plus the checkpoint meta."""
    state = load_checkpoint(path)
    state.model.eval()
    return state.model, ckpt.read_meta(Path(path))


# ---------------------------------------------------------------------------
# full runs


@dataclass(frozen=True)
class LoggingConfig:
    out_dir: str = "runs/default"
    log_interval: int = 1
    checkpoint_interval: int = 1000
    val_interval: int = 1000
    val_qf: int = 10

    def validate(self) -> None:
        if min(self.log_interval, self.checkpoint_interval, self.val_interval) < 1:
            raise ConfigurationError("logging intervals must be >= 1")
        if not 1 <= self.val_qf <= 100:
            raise ConfigurationError(f"val_qf must be in [1, 100], got {self.val_qf}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LoggingConfig":
        return cls(**d)


@dataclass(frozen=True)
class RunConfig:
    """Full run description; serialized as the JSON the CLI consumes.

    Sections: ``model``, ``optimizer``, ``data`` (manifest path, distortion
    spec, patch spec, data seed), ``logging``; plus the model seed and the
    deterministic-substrate switch.
    """

    model: ModelConfig
    optimizer: OptimizerConfig
    manifest_path: str
    distortion: DistortionSpec = DistortionSpec()
    patch: PatchSpec = PatchSpec()
    data_seed: int = 0
    logging: LoggingConfig = LoggingConfig()
    seed: int = 0
    deterministic: bool = True

    def validate(self) -> None:
        self.model.validate()
        self.optimizer.validate()
        self.distortion.validate()
        self.patch.validate()
        self.logging.validate()

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "data": {
                "manifest": self.manifest_path,
                "distortion": self.distortion.to_dict(),
                "patch": self.patch.to_dict(),
                "seed": self.data_seed,
            },
            "logging": self.logging.to_dict(),
            "seed": self.seed,
            "deterministic": self.deterministic,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        data = doc.get("data", {})
        return cls(
            model=ModelConfig.from_dict(doc.get("model", {})),
            optimizer=OptimizerConfig.from_dict(doc.get("optimizer", {})),
            manifest_path=data["manifest"],
            distortion=DistortionSpec(**data.get("distortion", {})),
            patch=PatchSpec(**data.get("patch", {})),
            data_seed=int(data.get("seed", 0)),
            logging=LoggingConfig.from_dict(doc.get("logging", {})),
            seed=int(doc.get("seed", 0)),
            deterministic=bool(doc.get("deterministic", True)),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class FitResult:
    out_dir: str
    train_log: str
    val_log: str
    final_checkpoint: str
    initial_loss: float
    final_loss: float
    steps_run: int


def _restore_for_eval(model: RestorationNet, image_hwc: np.ndarray) -> np.ndarray:
    """pad -> forward -> crop -> clamp, on one (H, W, 3) [0, 1] image."""
    t = torch.from_numpy(np.ascontiguousarray(image_hwc.transpose(2, 0, 1), dtype=np.float32))[None]
    with torch.no_grad():
        out = model(t)
    restored = out.restored.clamp_(0.0, 1.0)[0].numpy().transpose(1, 2, 0)
    return np.ascontiguousarray(restored)


def _validate_psnr(model: RestorationNet, val_pairs: list[tuple[np.ndarray, np.ndarray]]) -> float:
    values = [psnr(pristine, _restore_for_eval(model, compressed)) for compressed, pristine in val_pairs]
    return float(np.mean(values))


def fit(run: RunConfig, resume_from: str | Path | None = None) -> FitResult:
    """Run (or resume) training to ``optimizer.total_steps`` completed steps.

    Emits ``train_log.csv`` (step, lr, total, l1, ssim_term), ``val_log.csv``
    (step, psnr), periodic checkpoint directories and a ``run.json``
    provenance record under ``logging.out_dir``. Resuming from a
    checkpoint written by the same config reproduces the uninterrupted
    parameter trajectory bitwise (deterministic substrate, fixed thread
    count).
    """
    run.validate()
    out_dir = Path(run.logging.out_dir)
    ckpt_root = out_dir / "checkpoints"
    try:
        ckpt_root.mkdir(parents=True, exist_ok=True)
        probe = ckpt_root / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CheckpointError(f"checkpoint directory not writable: {ckpt_root}: {exc}") from exc

    torch.use_deterministic_algorithms(run.deterministic)

    if resume_from is not None:
        state = load_checkpoint(resume_from, model_config=run.model)
        state.optimizer_config = run.optimizer
        if state.rng_state is not None:
            torch.set_rng_state(torch.frombuffer(bytearray(state.rng_state), dtype=torch.uint8).clone())
        logger.info("resumed from %s at step %d", resume_from, state.step)
    else:
        state = new_train_state(run.model, run.optimizer, run.seed)
    state.model.train()

    manifest = CorpusManifest.load(run.manifest_path)
    sampler = PatchSampler(manifest, run.distortion, run.patch, run.data_seed)

    val_pairs: list[tuple[np.ndarray, np.ndarray]] = []
    for path in manifest.paths("val"):
        pristine = load_image(path)
        val_pairs.append((distort_jpeg(pristine, run.logging.val_qf), pristine))

    run_meta = {
        "config": run.to_dict(),
        "codec_id": codec_id(),
        "torch_version": torch.__version__,
        "torch_num_threads": torch.get_num_threads(),
        "deterministic": run.deterministic,
        "resumed_from": str(resume_from) if resume_from is not None else None,
        "start_step": state.step,
    }
    (out_dir / RUN_META_NAME).write_text(json.dumps(run_meta, indent=2, sort_keys=True) + "\n")

    train_log = out_dir / TRAIN_LOG_NAME
    val_log = out_dir / VAL_LOG_NAME
    mode = "a" if resume_from is not None and train_log.exists() else "w"
    log_fh = open(train_log, mode, encoding="utf-8")
    val_fh = open(val_log, mode, encoding="utf-8")
    if mode == "w":
        log_fh.write("step,lr,total,l1,ssim_term\n")
        val_fh.write("step,psnr\n")

    initial_loss = math.nan
    final_loss = math.nan
    steps_run = 0
    final_ckpt = out_dir / "checkpoints" / f"step_{run.optimizer.total_steps:08d}"
    try:
        for k in range(state.step, run.optimizer.total_steps):
            lr = lr_at_step(k, run.optimizer)
            batch = sampler.sample(k)
            _, report = train_step(state, batch)
            values = report.item_dict()
            if math.isnan(initial_loss):
                initial_loss = values["total"]
            final_loss = values["total"]
            steps_run += 1
            completed = state.step
            if completed % run.logging.log_interval == 0:
                log_fh.write(
                    f"{completed},{lr!r},{values['total']!r},{values['l1']!r},{values['ssim_term']!r}\n"
                )
                log_fh.flush()
            if val_pairs and completed % run.logging.val_interval == 0:
                state.model.eval()
                val_psnr = _validate_psnr(state.model, val_pairs)
                state.model.train()
                if state.best_val_psnr is None or val_psnr > state.best_val_psnr:
                    state.best_val_psnr = val_psnr
                val_fh.write(f"{completed},{val_psnr!r}\n")
                val_fh.flush()
            if completed % run.logging.checkpoint_interval == 0 or completed == run.optimizer.total_steps:
                save_checkpoint(state, out_dir / "checkpoints" / f"step_{completed:08d}")
        if state.step == run.optimizer.total_steps and not final_ckpt.is_dir():
            save_checkpoint(state, final_ckpt)
    finally:
        log_fh.close()
        val_fh.close()

    return FitResult(
        out_dir=str(out_dir),
        train_log=str(train_log),
        val_log=str(val_log),
        final_checkpoint=str(final_ckpt),
        initial_loss=initial_loss,
        final_loss=final_loss,
        steps_run=steps_run,
    )
