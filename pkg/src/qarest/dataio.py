"""Training-pair synthesis and manifest handling.

Pristine corpora are described by a JSON manifest (name, root, seed,
(path, split) entries). Training pairs are built on the fly: a full
pristine image is JPEG-compressed at a quality factor drawn uniformly
from the distortion spec, then one random crop is taken from the
compressed and pristine versions at the same offset. Subjective-score
databases are consumed as CSV manifests with the header
``path,distortion,level,score,higher_is_better``.

Images are numpy float32 RGB arrays in [0, 1]; batches are float32
(batch, channel, height, width).
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import cv2
import numpy as np

from .errors import CodecError, InputError, ManifestError, ParseError, ValidationError

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")

#: Distortion vocabulary for score manifests. Training only ever uses
#: "jpeg"; other types appear in evaluation databases.
DISTORTION_TYPES = (
    "jpeg",
    "jpeg2000",
    "gaussian_blur",
    "white_noise",
    "fast_fading",
    "pristine",
)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")

MANIFEST_VERSION = 1


def codec_id() -> str:
    """Identity of the JPEG codec used for distortion, for run provenance."""
    return f"opencv-jpeg-{cv2.__version__}"


# ---------------------------------------------------------------------------
# image io


def load_image(path: str | Path) -> np.ndarray:
    """Load an image file as float32 RGB in [0, 1], shape (H, W, 3)."""
    data = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if data is None:
        raise InputError(f"cannot decode image: {path}")
    return cv2.cvtColor(data, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0


def save_image(path: str | Path, image: np.ndarray) -> None:
    """Write a float [0, 1] RGB (H, W, 3) array as an image file."""
    a = np.asarray(image)
    if a.ndim != 3 or a.shape[2] != 3:
        raise InputError(f"expected (H, W, 3) image, got shape {a.shape}")
    u8 = np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)
    if not cv2.imwrite(str(path), cv2.cvtColor(u8, cv2.COLOR_RGB2BGR)):
        raise InputError(f"cannot write image: {path}")


def hwc_to_chw(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image.transpose(2, 0, 1))


def chw_to_hwc(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image.transpose(1, 2, 0))


def distort_jpeg(image: np.ndarray, qf: int) -> np.ndarray:
    """Round-trip an RGB [0, 1] image through baseline JPEG at quality ``qf``."""
    if not 1 <= int(qf) <= 100:
        raise InputError(f"quality factor must be in [1, 100], got {qf}")
    a = np.asarray(image)
    if a.ndim != 3 or a.shape[2] != 3:
        raise InputError(f"expected (H, W, 3) image, got shape {a.shape}")
    u8 = np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)
    ok, payload = cv2.imencode(".jpg", cv2.cvtColor(u8, cv2.COLOR_RGB2BGR), [cv2.IMWRITE_JPEG_QUALITY, int(qf)])
    if not ok:
        raise CodecError(f"JPEG encode failed at qf={qf}")
    decoded = cv2.imdecode(payload, cv2.IMREAD_COLOR)
    if decoded is None or decoded.shape[:2] != a.shape[:2]:
        raise CodecError(f"JPEG decode failed at qf={qf}")
    return cv2.cvtColor(decoded, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0


# ---------------------------------------------------------------------------
# corpus manifests


@dataclass
class CorpusManifest:
    name: str
    root: str
    seed: int
    entries: list[tuple[str, str]] = field(default_factory=list)  # (relative path, split)

    def paths(self, split: str) -> list[str]:
        """Absolute paths of one split, in manifest order."""
        if split not in SPLITS:
            raise ManifestError(f"unknown split {split!r}, expected one of {SPLITS}")
        root = Path(self.root)
        return [str(root / p) for p, s in self.entries if s == split]

    def split_sizes(self) -> dict[str, int]:
        return {s: sum(1 for _, sp in self.entries if sp == s) for s in SPLITS}

    def save(self, path: str | Path) -> None:
        doc = {
            "format_version": MANIFEST_VERSION,
            "name": self.name,
            "root": self.root,
            "seed": self.seed,
            "entries": [{"path": p, "split": s} for p, s in self.entries],
        }
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CorpusManifest":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read corpus manifest {path}: {exc}") from exc
        try:
            entries = [(e["path"], e["split"]) for e in doc["entries"]]
            manifest = cls(name=doc["name"], root=doc["root"], seed=int(doc["seed"]), entries=entries)
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"corpus manifest {path} missing field: {exc}") from exc
        for p, s in manifest.entries:
            if s not in SPLITS:
                raise ManifestError(f"corpus manifest {path}: unknown split {s!r} for {p}")
        return manifest


def build_corpus_manifest(
    root_dirs: list[str | Path],
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    name: str = "corpus",
) -> CorpusManifest:
    """Scan directories for decodable images and split them deterministically.

    Files that fail to decode are excluded with a warning. Split sizes are
    the floor of the cumulative fractions, so (0.8, 0.1, 0.1) over 10
    images gives (8, 1, 1).
    """
    if len(split_fractions) != len(SPLITS):
        raise ManifestError(f"need {len(SPLITS)} split fractions, got {len(split_fractions)}")
    if any(f < 0 for f in split_fractions) or abs(sum(split_fractions) - 1.0) > 1e-9:
        raise ManifestError(f"split fractions must be nonnegative and sum to 1, got {split_fractions}")
    roots = [Path(r) for r in root_dirs]
    for r in roots:
        if not r.is_dir():
            raise ManifestError(f"corpus directory does not exist: {r}")
    common_root = roots[0] if len(roots) == 1 else Path("/")

    candidates: list[Path] = []
    for r in roots:
        candidates.extend(p for p in sorted(r.rglob("*")) if p.suffix.lower() in IMAGE_EXTENSIONS)
    usable: list[str] = []
    for p in candidates:
        if cv2.imread(str(p), cv2.IMREAD_COLOR) is None:
            logger.warning("excluding undecodable image: %s", p)
            continue
        usable.append(str(p.relative_to(common_root)) if common_root != Path("/") else str(p))
    if not usable:
        raise ManifestError(f"no decodable images found under {[str(r) for r in roots]}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(usable))
    shuffled = [usable[i] for i in order]
    n = len(shuffled)
    cum = np.cumsum(split_fractions)
    bounds = [int(np.floor(c * n)) for c in cum]
    bounds[-1] = n
    entries: list[tuple[str, str]] = []
    start = 0
    for split, end in zip(SPLITS, bounds):
        entries.extend((p, split) for p in shuffled[start:end])
        start = end
    return CorpusManifest(name=name, root=str(common_root), seed=seed, entries=entries)


# ---------------------------------------------------------------------------
# training batches


@dataclass(frozen=True)
class DistortionSpec:
    codec: str = "jpeg-baseline"
    qf_min: int = 5
    qf_max: int = 95

    def validate(self) -> None:
        if not 1 <= self.qf_min <= self.qf_max <= 100:
            raise InputError(f"need 1 <= qf_min <= qf_max <= 100, got [{self.qf_min}, {self.qf_max}]")
        if self.codec != "jpeg-baseline":
            raise InputError(f"unsupported codec {self.codec!r}")

    def sample_qf(self, rng: np.random.Generator) -> int:
        """Integer quality factor, uniform on [qf_min, qf_max] inclusive."""
        return int(rng.integers(self.qf_min, self.qf_max + 1))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PatchSpec:
    patch_size: int = 96
    batch_size: int = 16

    def validate(self) -> None:
        if self.patch_size < 1 or self.batch_size < 1:
            raise InputError(f"patch_size and batch_size must be >= 1, got {self}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BatchInfo:
    """Identifiers of one sampled batch, for logs and divergence diagnostics."""

    paths: tuple[str, ...]
    qfs: tuple[int, ...]
    offsets: tuple[tuple[int, int], ...]  # (top, left) per image


def sample_training_batch(
    train_paths: list[str],
    distortion: DistortionSpec,
    patch: PatchSpec,
    rng: np.random.Generator,
    cache: dict[str, np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray, BatchInfo]:
    """Draw one aligned (compressed, pristine) patch batch.

    Per element the draw order is: image index, quality factor, top
    offset, left offset; the full image is compressed before cropping so
    crops land on arbitrary block-grid phases. Images smaller than the
    patch are skipped with a warning. Returns float32 (B, 3, P, P) arrays
    plus the batch identifiers.
    """
    distortion.validate()
    patch.validate()
    if not train_paths:
        raise ManifestError("train split is empty")

    def fetch(path: str) -> np.ndarray:
        if cache is not None and path in cache:
            return cache[path]
        img = load_image(path)
        if cache is not None:
            cache[path] = img
        return img

    usable: list[tuple[str, np.ndarray]] = []
    for path in train_paths:
        img = fetch(path)
        if min(img.shape[0], img.shape[1]) < patch.patch_size:
            logger.warning("skipping %s: %sx%s smaller than patch %s", path, img.shape[0], img.shape[1], patch.patch_size)
            continue
        usable.append((path, img))
    if not usable:
        raise ManifestError(f"no train images of size >= {patch.patch_size}x{patch.patch_size}")

    ps = patch.patch_size
    comp = np.empty((patch.batch_size, 3, ps, ps), dtype=np.float32)
    prist = np.empty_like(comp)
    paths, qfs, offsets = [], [], []
    for b in range(patch.batch_size):
        path, img = usable[int(rng.integers(0, len(usable)))]
        qf = distortion.sample_qf(rng)
        distorted = distort_jpeg(img, qf)
        top = int(rng.integers(0, img.shape[0] - ps + 1))
        left = int(rng.integers(0, img.shape[1] - ps + 1))
        comp[b] = hwc_to_chw(distorted[top : top + ps, left : left + ps])
        prist[b] = hwc_to_chw(img[top : top + ps, left : left + ps])
        paths.append(path)
        qfs.append(qf)
        offsets.append((top, left))
    return comp, prist, BatchInfo(paths=tuple(paths), qfs=tuple(qfs), offsets=tuple(offsets))


class PatchSampler:
    """Deterministic batch stream over a manifest's train split.

    Batch k is a pure function of (base seed, k): its RNG stream is seeded
    with (seed, k), so any assignment of batch indices to prefetch workers
    reproduces the same sequence.
    """

    def __init__(
        self,
        manifest: CorpusManifest,
        distortion: DistortionSpec,
        patch: PatchSpec,
        seed: int,
        split: str = "train",
    ):
        distortion.validate()
        patch.validate()
        self.distortion = distortion
        self.patch = patch
        self.seed = seed
        self.train_paths = manifest.paths(split)
        if not self.train_paths:
            raise ManifestError(f"manifest {manifest.name!r} has no {split} images")
        self._cache: dict[str, np.ndarray] = {}

    def rng_for_batch(self, index: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, index])

    def sample(self, index: int) -> tuple[np.ndarray, np.ndarray, BatchInfo]:
        return sample_training_batch(
            self.train_paths, self.distortion, self.patch, self.rng_for_batch(index), cache=self._cache
        )

    def iter_batches(self, start: int, stop: int, num_workers: int = 0):
        """Yield batches for indices [start, stop), in order.

        With workers, batches are computed concurrently but yielded in
        index order; the content is identical to the sequential stream.
        """
        if num_workers <= 0:
            for k in range(start, stop):
                yield self.sample(k)
            return
        with ThreadPoolExecutor(max_workers=num_workers) as pool:
            yield from pool.map(self.sample, range(start, stop))


# ---------------------------------------------------------------------------
# subjective score manifests


@dataclass(frozen=True)
class MosRecord:
    image_path: str
    distortion_type: str
    level: float | None
    score: float
    higher_is_better: bool


@dataclass
class MosDatabase:
    records: list[MosRecord] = field(default_factory=list)
    path: str = ""

    def filter(self, distortion_type: str | None) -> list[MosRecord]:
        if distortion_type is None:
            return list(self.records)
        if distortion_type not in DISTORTION_TYPES:
            raise ValidationError(f"unknown distortion_type {distortion_type!r}, expected one of {DISTORTION_TYPES}")
        return [r for r in self.records if r.distortion_type == distortion_type]

    def distortions(self) -> list[str]:
        seen: list[str] = []
        for r in self.records:
            if r.distortion_type not in seen:
                seen.append(r.distortion_type)
        return seen


MOS_HEADER = ["path", "distortion", "level", "score", "higher_is_better"]

_BOOL_VALUES = {"true": True, "1": True, "false": False, "0": False}


def load_mos_manifest(path: str | Path) -> MosDatabase:
    """Parse a subjective-score CSV; malformed rows fail with their line number."""
    p = Path(path)
    if not p.is_file():
        raise ManifestError(f"score manifest does not exist: {p}")
    records: list[MosRecord] = []
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{p}: empty file, expected header {','.join(MOS_HEADER)}") from None
        if [h.strip() for h in header] != MOS_HEADER:
            raise ParseError(f"{p}: line 1: bad header {header}, expected {MOS_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(MOS_HEADER):
                raise ParseError(f"{p}: line {lineno}: expected {len(MOS_HEADER)} fields, got {len(row)}")
            raw_path, raw_dist, raw_level, raw_score, raw_hib = (c.strip() for c in row)
            if not raw_path:
                raise ParseError(f"{p}: line {lineno}: empty image path")
            if raw_dist not in DISTORTION_TYPES:
                raise ValidationError(
                    f"{p}: line {lineno}: unknown distortion_type {raw_dist!r}, expected one of {DISTORTION_TYPES}"
                )
            try:
                level = float(raw_level) if raw_level else None
            except ValueError:
                raise ParseError(f"{p}: line {lineno}: non-numeric level {raw_level!r}") from None
            try:
                score = float(raw_score)
            except ValueError:
                raise ParseError(f"{p}: line {lineno}: non-numeric score {raw_score!r}") from None
            if not np.isfinite(score):
                raise ValidationError(f"{p}: line {lineno}: score must be finite, got {raw_score}")
            if raw_hib.lower() not in _BOOL_VALUES:
                raise ParseError(f"{p}: line {lineno}: higher_is_better must be true/false/1/0, got {raw_hib!r}")
            records.append(
                MosRecord(
                    image_path=raw_path,
                    distortion_type=raw_dist,
                    level=level,
                    score=score,
                    higher_is_better=_BOOL_VALUES[raw_hib.lower()],
                )
            )
    return MosDatabase(records=records, path=str(p))


def save_mos_manifest(db: MosDatabase, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MOS_HEADER)
        for r in db.records:
            writer.writerow(
                [
                    r.image_path,
                    r.distortion_type,
                    "" if r.level is None else repr(float(r.level)),
                    repr(float(r.score)),
                    "true" if r.higher_is_better else "false",
                ]
            )
