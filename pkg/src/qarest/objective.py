"""Training objective: equally weighted L1 and SSIM terms.

Both terms operate on (batch, channel, height, width) tensors holding
values in [0, 1] and are differentiable with respect to the prediction.
SSIM is computed per channel with a Gaussian window over valid window
positions only (no padding), then averaged over positions, channels and
batch.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import torch
import torch.nn.functional as F

from .errors import DimensionError, InputError


@dataclass(frozen=True)
class SsimParams:
    """Window and stabilising constants for the SSIM index.

    ``dynamic_range`` is the value range L of the inputs (1.0 for [0, 1]
    images). The Gaussian window is normalised to sum to 1.
    """

    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ValueError(f"window_size must be odd and >= 1, got {self.window_size}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossReport:
    """One loss evaluation. All fields are 0-dim tensors; ``total`` backprops.

    Invariant: total = l1 + ssim_term, with ssim_term = 1 - mean_ssim.
    """

    total: torch.Tensor
    l1: torch.Tensor
    ssim_term: torch.Tensor
    mean_ssim: torch.Tensor

    def item_dict(self) -> dict[str, float]:
        """Detached python floats, for logging."""
        return {
            "total": float(self.total.detach()),
            "l1": float(self.l1.detach()),
            "ssim_term": float(self.ssim_term.detach()),
            "mean_ssim": float(self.mean_ssim.detach()),
        }


def gaussian_window(params: SsimParams, dtype=torch.float32, device=None) -> torch.Tensor:
    """2-D Gaussian window of shape (1, 1, size, size), normalised to sum 1."""
    n = params.window_size
    coords = torch.arange(n, dtype=dtype, device=device) - (n - 1) / 2.0
    g = torch.exp(-(coords**2) / (2.0 * params.sigma**2))
    g = g / g.sum()
    win2d = torch.outer(g, g)
    win2d = win2d / win2d.sum()
    return win2d.reshape(1, 1, n, n)


def _check_pair(pred: torch.Tensor, target: torch.Tensor) -> None:
    if pred.dim() != 4 or target.dim() != 4:
        raise DimensionError(
            f"expected 4-D (batch, channel, height, width) tensors, got {pred.dim()}-D and {target.dim()}-D"
        )
    if pred.shape != target.shape:
        raise DimensionError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")


def l1_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over all elements."""
    _check_pair(pred, target)
    return (pred - target).abs().mean()


def ssim_index(pred: torch.Tensor, target: torch.Tensor, params: SsimParams | None = None) -> torch.Tensor:
    """Mean local SSIM over all valid window positions and channels.

    Each channel is treated as an independent plane; local statistics are
    Gaussian-weighted means over the window, with variances computed as
    E[x^2] - E[x]^2 under the same weights. Returns a 0-dim tensor in
    [-1, 1], differentiable w.r.t. both inputs.
    """
    if params is None:
        params = SsimParams()
    _check_pair(pred, target)
    _, c, h, w = pred.shape
    n = params.window_size
    if h < n or w < n:
        raise InputError(f"image {h}x{w} smaller than SSIM window {n}x{n}")

    win = gaussian_window(params, dtype=pred.dtype, device=pred.device)
    win = win.expand(c, 1, n, n)

    mu_x = F.conv2d(pred, win, groups=c)
    mu_y = F.conv2d(target, win, groups=c)
    mu_xx = mu_x * mu_x
    mu_yy = mu_y * mu_y
    mu_xy = mu_x * mu_y
    sigma_xx = F.conv2d(pred * pred, win, groups=c) - mu_xx
    sigma_yy = F.conv2d(target * target, win, groups=c) - mu_yy
    sigma_xy = F.conv2d(pred * target, win, groups=c) - mu_xy

    c1 = (params.k1 * params.dynamic_range) ** 2
    c2 = (params.k2 * params.dynamic_range) ** 2
    ssim_map = ((2 * mu_xy + c1) * (2 * sigma_xy + c2)) / ((mu_xx + mu_yy + c1) * (sigma_xx + sigma_yy + c2))
    return ssim_map.mean()


def total_loss(pred: torch.Tensor, target: torch.Tensor, params: SsimParams | None = None) -> LossReport:
    """Equally weighted sum of the L1 term and (1 - mean SSIM)."""
    l1 = l1_loss(pred, target)
    mean_ssim = ssim_index(pred, target, params)
    ssim_term = 1.0 - mean_ssim
    return LossReport(total=l1 + ssim_term, l1=l1, ssim_term=ssim_term, mean_ssim=mean_ssim)
