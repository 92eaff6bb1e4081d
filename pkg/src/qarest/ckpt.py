"""On-disk checkpoint format.

A checkpoint is a directory:

* ``meta.json``: format version, model config, optional optimizer config,
  step counter, seed, and bookkeeping fields.
* ``params/<name>.bin``: one blob per named parameter. Blob layout:
  rank as little-endian uint64, then ``rank`` dimensions as little-endian
  uint64, then the element data as little-endian float32 in C order.
* ``moments_m/``, ``moments_v/`` (training checkpoints only): Adam
  moment blobs, same layout and names as ``params/``.
* ``rng_state.bin`` (optional): raw bytes of the torch RNG state.

Parameter names are the model ``state_dict`` keys (dotted
``encoder.stage0.block1.conv2.weight`` style). Blob round trips are
bitwise: float32 in, the same float32 out.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError, CheckpointShapeError, CheckpointVersionError

FORMAT_VERSION = 1

META_NAME = "meta.json"
PARAMS_DIR = "params"
MOMENTS_M_DIR = "moments_m"
MOMENTS_V_DIR = "moments_v"
RNG_STATE_NAME = "rng_state.bin"


def write_tensor_blob(path: Path, array: np.ndarray) -> None:
    a = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", a.ndim))
        fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        fh.write(a.tobytes(order="C"))


def read_tensor_blob(path: Path) -> np.ndarray:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read blob {path}: {exc}") from exc
    if len(raw) < 8:
        raise CheckpointError(f"corrupt blob {path}: truncated header")
    (rank,) = struct.unpack_from("<Q", raw, 0)
    header = 8 + 8 * rank
    if rank > 32 or len(raw) < header:
        raise CheckpointError(f"corrupt blob {path}: bad rank {rank}")
    shape = struct.unpack_from(f"<{rank}Q", raw, 8)
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    if len(raw) != header + 4 * count:
        raise CheckpointError(
            f"corrupt blob {path}: expected {header + 4 * count} bytes for shape {shape}, got {len(raw)}"
        )
    return np.frombuffer(raw, dtype="<f4", offset=header).reshape(shape).copy()


def write_tensor_dir(dirpath: Path, tensors: dict[str, torch.Tensor]) -> None:
    dirpath.mkdir(parents=True, exist_ok=True)
    for name, t in tensors.items():
        write_tensor_blob(dirpath / f"{name}.bin", t.detach().cpu().numpy())


def read_tensor_dir(dirpath: Path, names: list[str]) -> dict[str, torch.Tensor]:
    out: dict[str, torch.Tensor] = {}
    for name in names:
        blob = dirpath / f"{name}.bin"
        if not blob.is_file():
            raise CheckpointError(f"missing blob for {name!r} in {dirpath}")
        out[name] = torch.from_numpy(read_tensor_blob(blob))
    return out


def write_meta(path: Path, meta: dict) -> None:
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_meta(path: Path) -> dict:
    meta_file = path / META_NAME
    if not meta_file.is_file():
        raise CheckpointError(f"not a checkpoint directory (no {META_NAME}): {path}")
    try:
        meta = json.loads(meta_file.read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt {META_NAME} in {path}: {exc}") from exc
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint {path} has format version {version}, this build reads {FORMAT_VERSION}")
    return meta


def load_params_into(model: torch.nn.Module, ckpt_dir: Path) -> None:
    """Copy stored parameter blobs into the model, validating shapes."""
    params_dir = ckpt_dir / PARAMS_DIR
    state = dict(model.named_parameters())
    loaded = read_tensor_dir(params_dir, list(state))
    for name, tensor in state.items():
        blob = loaded[name]
        if tuple(blob.shape) != tuple(tensor.shape):
            raise CheckpointShapeError(
                f"parameter {name!r}: checkpoint shape {tuple(blob.shape)} does not match model shape {tuple(tensor.shape)}"
            )
        with torch.no_grad():
            tensor.copy_(blob)


def checkpoint_id(ckpt_dir: str | Path) -> str:
    """Short content hash over the stored parameters (order-independent name sort)."""
    ckpt_dir = Path(ckpt_dir)
    digest = hashlib.sha256()
    params_dir = ckpt_dir / PARAMS_DIR
    if params_dir.is_dir():
        for blob in sorted(params_dir.iterdir()):
            digest.update(blob.name.encode())
            digest.update(blob.read_bytes())
    meta_file = ckpt_dir / META_NAME
    if meta_file.is_file():
        digest.update(meta_file.read_bytes())
    return digest.hexdigest()[:16]
