"""Evaluation-side fidelity metrics, quality-map pooling and correlations.

Images are numpy arrays shaped (H, W) or (H, W, C) with values in [0, 1]
unless a different ``max_val`` is passed. All reductions run in float64
in a fixed order, so results are reproducible bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import torch

from . import objective
from .errors import DimensionError, InputError, UndefinedCorrelationError

#: BT.601 luma weights for RGB inputs.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

CHANNEL_MODES = ("rgb_mean", "luma_bt601")


@dataclass(frozen=True)
class PoolingSpec:
    """Minkowski pooling setup: exponent ``p`` and 1-based quality-map index."""

    p: float = 2.0
    map_index: int = 2

    def validate(self) -> None:
        if self.p <= 0:
            raise InputError(f"pooling exponent must be > 0, got {self.p}")
        if self.map_index < 1:
            raise InputError(f"map_index must be >= 1, got {self.map_index}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class QualityEstimate:
    """Pooled quality score for one image; q is in [0, 1]."""

    q: float
    map_index: int
    p: float
    image_id: str = ""


@dataclass(frozen=True)
class CorrelationReport:
    pcc: float
    srcc: float
    kcc: float
    n_samples: int


def _as_float_image(img) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim not in (2, 3):
        raise DimensionError(f"expected (H, W) or (H, W, C) image, got shape {a.shape}")
    return a


def _check_same_shape(ref: np.ndarray, test: np.ndarray) -> None:
    if ref.shape != test.shape:
        raise DimensionError(f"shape mismatch: {ref.shape} vs {test.shape}")


def luma_bt601(img) -> np.ndarray:
    """BT.601 luma plane: 0.299 R + 0.587 G + 0.114 B. Grayscale passes through."""
    a = _as_float_image(img)
    if a.ndim == 2:
        return a
    if a.shape[2] == 1:
        return a[:, :, 0]
    if a.shape[2] == 3:
        r, g, b = LUMA_WEIGHTS
        return r * a[:, :, 0] + g * a[:, :, 1] + b * a[:, :, 2]
    raise DimensionError(f"expected 1 or 3 channels for luma conversion, got {a.shape[2]}")


def mse(ref, test) -> float:
    """Mean squared error over all elements (direct definition)."""
    r = _as_float_image(ref)
    t = _as_float_image(test)
    _check_same_shape(r, t)
    return float(np.mean((r - t) ** 2))


def psnr(ref, test, max_val: float = 1.0) -> float:
    """10 log10(max_val^2 / MSE); +inf when the images are identical."""
    m = mse(ref, test)
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val**2 / m)


def ssim_eval(ref, test, channel_mode: str = "rgb_mean", params: objective.SsimParams | None = None) -> float:
    """SSIM between two images, sharing the training core.

    ``rgb_mean`` computes SSIM per channel and averages; ``luma_bt601``
    computes it on the BT.601 luma plane only.
    """
    if channel_mode not in CHANNEL_MODES:
        raise InputError(f"channel_mode must be one of {CHANNEL_MODES}, got {channel_mode!r}")
    r = _as_float_image(ref)
    t = _as_float_image(test)
    _check_same_shape(r, t)
    if channel_mode == "luma_bt601":
        r = luma_bt601(r)
        t = luma_bt601(t)
    if r.ndim == 2:
        r = r[:, :, None]
        t = t[:, :, None]
    rt = torch.from_numpy(np.ascontiguousarray(r.transpose(2, 0, 1))[None])
    tt = torch.from_numpy(np.ascontiguousarray(t.transpose(2, 0, 1))[None])
    return float(objective.ssim_index(rt, tt, params))


def blocking_effect_factor(test, block_size: int = 8) -> float:
    """Excess mean squared discontinuity across the block grid of ``test``.

    For each direction, D_b is the mean squared difference over adjacent
    pixel pairs that straddle a block boundary and D_bc the same over all
    other adjacent pairs; the direction contributes
    eta * (D_b - D_bc) with eta = log2(block_size) / log2(min(H, W)) when
    D_b > D_bc and 0 otherwise. Color inputs are reduced to BT.601 luma
    first. Always >= 0.
    """
    if block_size < 2:
        raise InputError(f"block_size must be >= 2, got {block_size}")
    y = luma_bt601(test)
    h, w = y.shape
    if min(h, w) <= block_size:
        raise InputError(f"image {h}x{w} too small for block size {block_size}")

    bef = 0.0
    for axis in (1, 0):  # horizontal pairs (columns), then vertical pairs (rows)
        d = np.diff(y, axis=axis)
        n_pairs = d.shape[axis]
        idx = np.arange(n_pairs)
        boundary = (idx + 1) % block_size == 0
        d2 = d**2
        if axis == 1:
            d_b = float(np.mean(d2[:, boundary]))
            d_bc = float(np.mean(d2[:, ~boundary]))
        else:
            d_b = float(np.mean(d2[boundary, :]))
            d_bc = float(np.mean(d2[~boundary, :]))
        if d_b > d_bc:
            eta = math.log2(block_size) / math.log2(min(h, w))
            bef += eta * (d_b - d_bc)
    return bef


def psnr_b(ref, test, block_size: int = 8, max_val: float = 1.0) -> float:
    """Block-sensitive PSNR: 10 log10(max_val^2 / (MSE + BEF(test))).

    The MSE term is the same all-channel MSE used by :func:`psnr`, so
    psnr_b == psnr exactly whenever the test image has no excess block
    discontinuity, and psnr_b <= psnr always.
    """
    r = _as_float_image(ref)
    t = _as_float_image(test)
    _check_same_shape(r, t)
    m = mse(r, t)
    bef = blocking_effect_factor(t, block_size)
    denom = m + bef
    if denom == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val**2 / denom)


def minkowski_pool(gamma_map, p: float) -> float:
    """Generalised power mean Q = (mean(g**p))**(1/p) of a map in [0, 1]."""
    if p <= 0:
        raise InputError(f"pooling exponent must be > 0, got {p}")
    g = np.asarray(gamma_map, dtype=np.float64)
    if g.size == 0:
        raise InputError("cannot pool an empty map")
    if not np.isfinite(g).all():
        raise InputError("map contains non-finite values")
    if g.min() < 0.0 or g.max() > 1.0:
        raise InputError(f"map values must lie in [0, 1], got range [{g.min()}, {g.max()}]")
    return float(np.mean(g**p) ** (1.0 / p))


def _corr_inputs(x, y, min_n: int = 3) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=np.float64).ravel()
    ya = np.asarray(y, dtype=np.float64).ravel()
    if xa.shape != ya.shape:
        raise DimensionError(f"length mismatch: {xa.shape[0]} vs {ya.shape[0]}")
    if xa.shape[0] < min_n:
        raise UndefinedCorrelationError(f"need at least {min_n} samples, got {xa.shape[0]}")
    if not (np.isfinite(xa).all() and np.isfinite(ya).all()):
        raise InputError("correlation inputs must be finite")
    return xa, ya


def _centered_sums(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    dx = x - x.mean()
    dy = y - y.mean()
    return float(np.dot(dx, dy)), float(np.dot(dx, dx)), float(np.dot(dy, dy))


def pearson(x, y) -> float:
    """Sample linear correlation S_xy / sqrt(S_xx * S_yy)."""
    xa, ya = _corr_inputs(x, y)
    sxy, sxx, syy = _centered_sums(xa, ya)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("pearson undefined for a constant input")
    return sxy / math.sqrt(sxx * syy)


def average_ranks(x) -> np.ndarray:
    """1-based ranks with ties replaced by the average of their positions."""
    xa = np.asarray(x, dtype=np.float64).ravel()
    n = xa.shape[0]
    order = np.argsort(xa, kind="mergesort")
    sx = xa[order]
    new_group = np.r_[True, sx[1:] != sx[:-1]]
    group = np.cumsum(new_group) - 1
    counts = np.bincount(group)
    ends = np.cumsum(counts)
    starts = ends - counts
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = avg[group]
    return ranks


def spearman(x, y) -> float:
    """Pearson correlation of average ranks (ties averaged)."""
    xa, ya = _corr_inputs(x, y)
    rx = average_ranks(xa)
    ry = average_ranks(ya)
    sxy, sxx, syy = _centered_sums(rx, ry)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("spearman undefined for a constant input")
    return sxy / math.sqrt(sxx * syy)


def kendall(x, y) -> float:
    """Kendall tau-b: (C - D) / sqrt((n0 - T_x) * (n0 - T_y)).

    C/D count concordant/discordant pairs, T_x/T_y pairs tied in x/y, and
    n0 = n(n-1)/2. Quadratic in n; intended for score lists, not pixels.
    """
    xa, ya = _corr_inputs(x, y)
    n = xa.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    sx = np.sign(xa[iu] - xa[ju])
    sy = np.sign(ya[iu] - ya[ju])
    con_minus_dis = float(np.sum(sx * sy))
    n0 = n * (n - 1) // 2
    tie_x = int(np.sum(sx == 0))
    tie_y = int(np.sum(sy == 0))
    denom_sq = float(n0 - tie_x) * float(n0 - tie_y)
    if denom_sq == 0.0:
        raise UndefinedCorrelationError("kendall tau-b undefined for a constant input")
    return con_minus_dis / math.sqrt(denom_sq)


def fit_logistic_mapping(predicted, subjective, iterations: int = 500) -> np.ndarray:
    """Least-squares 4-parameter logistic remap of predictions onto the score scale.

        l(x) = b2 + (b1 - b2) / (1 + exp(-(x - b3) / |b4|))

    Used only as an optional preprocessing step for the linear correlation;
    rank correlations are invariant to it. Deterministic (fixed-iteration
    first-order fit, no randomness).
    """
    xa, ya = _corr_inputs(predicted, subjective)
    x = torch.from_numpy(xa)
    y = torch.from_numpy(ya)
    b = torch.tensor(
        [float(ya.max()), float(ya.min()), float(np.median(xa)), float(xa.std() + 1e-6)],
        dtype=torch.float64,
        requires_grad=True,
    )
    scale = max(float(np.abs(ya).max()), 1.0)
    step_size = 0.05 * scale
    for _ in range(iterations):
        mapped = b[1] + (b[0] - b[1]) / (1.0 + torch.exp(-(x - b[2]) / b[3].abs().clamp_min(1e-9)))
        loss = ((mapped - y) ** 2).mean()
        (grad,) = torch.autograd.grad(loss, b)
        with torch.no_grad():
            b -= step_size * grad / (grad.norm() + 1e-12)
    with torch.no_grad():
        mapped = b[1] + (b[0] - b[1]) / (1.0 + torch.exp(-(x - b[2]) / b[3].abs().clamp_min(1e-9)))
    return mapped.numpy()


def correlation_report(predicted, subjective, logistic_pcc: bool = False) -> CorrelationReport:
    """All three correlation coefficients between two score lists.

    ``logistic_pcc`` applies :func:`fit_logistic_mapping` to the
    predictions before the linear correlation only (off by default).
    """
    xa, ya = _corr_inputs(predicted, subjective)
    px = fit_logistic_mapping(xa, ya) if logistic_pcc else xa
    return CorrelationReport(
        pcc=pearson(px, ya),
        srcc=spearman(xa, ya),
        kcc=kendall(xa, ya),
        n_samples=int(xa.shape[0]),
    )
