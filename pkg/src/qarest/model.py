"""Gated residual U-Net for JPEG deblocking.

The network is an encoder-decoder trunk over ``num_scales`` resolution
levels with channel widths ``base_channels * 2**s`` at scale ``s``.
Feature merging at each decoder level is a convex blend, not a
concatenation: a small convolutional autoencoder (:class:`QualityGate`)
looks at both branches and emits a single-channel map ``g`` in [0, 1]
that gates all channels,

    merged = g * skip + (1 - g) * decoder.

Regions where ``g`` is high pass encoder features through nearly
untouched, so after training the gate maps double as local quality maps:
high values mark regions that need little restoration.

Layer inventory (the parameter count is a pure function of the config):

* head: 3x3 conv, input_channels -> w0
* encoder, scales s = 0 .. S-1: res_blocks_per_stage residual blocks at
  width ws (scale S-1 is the bottleneck), plus a stride-2 3x3
  downsampling conv ws -> w(s+1) for s < S-1
* decoder, scales s = S-2 .. 0: stride-2 3x3 transposed conv
  w(s+1) -> ws, one QualityGate at width ws, then res_blocks_per_stage
  residual blocks at ws
* QualityGate at width w: 1x1 conv 2w -> a, ``attention_depth`` stride-2
  3x3 convs a -> a, the mirrored stride-2 3x3 transposed convs a -> a,
  and a final 3x3 conv a -> 1 (a = attention_channels)
* tail: 3x3 conv, w0 -> input_channels
* residual block at width w: two 3x3 convs w -> w (conv -> ReLU -> conv,
  plus identity; no normalisation layers)

The restored image is the input plus the tail's correction when
``global_input_residual`` is set (clamping to [0, 1] is left to
inference-time callers so that training gradients are not zeroed).

Parameter names follow the ``state_dict`` scheme
``encoder.stage{s}.block{j}.conv{k}``, ``encoder.down{s}``,
``decoder.up{s}``, ``decoder.gate{s}.(reduce|down{k}|up{k}|out)``,
``decoder.stage{s}.block{j}.conv{k}``, ``head``, ``tail``; the 1-based
quality-map index n used in reports corresponds to scale s = n - 1
(map 1 is the full-resolution merge).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, DimensionError, InputError


@dataclass(frozen=True)
class ModelConfig:
    input_channels: int = 3
    base_channels: int = 64
    num_scales: int = 4
    res_blocks_per_stage: int = 4
    attention_channels: int = 16
    attention_depth: int = 2
    global_input_residual: bool = True

    def validate(self) -> None:
        if self.input_channels < 1:
            raise ConfigurationError(f"input_channels must be >= 1, got {self.input_channels}")
        if self.base_channels < 1:
            raise ConfigurationError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.num_scales < 2:
            raise ConfigurationError(f"num_scales must be >= 2, got {self.num_scales}")
        if self.res_blocks_per_stage < 1:
            raise ConfigurationError(f"res_blocks_per_stage must be >= 1, got {self.res_blocks_per_stage}")
        if self.attention_channels < 1:
            raise ConfigurationError(f"attention_channels must be >= 1, got {self.attention_channels}")
        if self.attention_depth < 1:
            raise ConfigurationError(f"attention_depth must be >= 1, got {self.attention_depth}")

    @property
    def num_gates(self) -> int:
        """Number of QualityGate blocks (= number of quality maps)."""
        return self.num_scales - 1

    @property
    def pad_factor(self) -> int:
        """Spatial sizes are padded to a multiple of this before the trunk runs."""
        return 2 ** (self.num_scales - 1)

    def width(self, scale: int) -> int:
        return self.base_channels * (2**scale)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class RestorationOutput:
    """Forward-pass result: restored image batch plus per-scale gate maps.

    ``quality_maps[s]`` has shape (batch, 1, ceil(H / 2**s), ceil(W / 2**s));
    index 0 is the full-resolution merge. The 1-based map index used in
    quality reports is s + 1.
    """

    restored: torch.Tensor
    quality_maps: list[torch.Tensor] = field(default_factory=list)

    def quality_map(self, index: int) -> torch.Tensor:
        """Gate map by 1-based index (1 = full resolution)."""
        if not 1 <= index <= len(self.quality_maps):
            raise DimensionError(f"quality map index {index} out of range 1..{len(self.quality_maps)}")
        return self.quality_maps[index - 1]


def validate_image_batch(batch: torch.Tensor, channels: int | None = None) -> None:
    """Raise if ``batch`` is not a finite 4-D (B, C, H, W) tensor."""
    if batch.dim() != 4:
        raise DimensionError(f"expected 4-D (batch, channel, height, width) tensor, got {batch.dim()}-D")
    if channels is not None and batch.shape[1] != channels:
        raise DimensionError(f"expected {channels} channels, got {batch.shape[1]}")
    if not torch.isfinite(batch).all():
        raise InputError("input batch contains non-finite values")


def pad_to_multiple(image: torch.Tensor, factor: int) -> tuple[torch.Tensor, tuple[int, int]]:
    """Replication-pad bottom/right so H and W are multiples of ``factor``.

    Returns the padded tensor and the original (H, W) for :func:`crop_back`.
    """
    if factor < 1:
        raise DimensionError(f"pad factor must be >= 1, got {factor}")
    if image.dim() != 4:
        raise DimensionError(f"expected 4-D tensor, got {image.dim()}-D")
    h, w = image.shape[-2:]
    ph = (factor - h % factor) % factor
    pw = (factor - w % factor) % factor
    if ph == 0 and pw == 0:
        return image, (h, w)
    return F.pad(image, (0, pw, 0, ph), mode="replicate"), (h, w)


def crop_back(padded: torch.Tensor, original_size: tuple[int, int]) -> torch.Tensor:
    """Undo :func:`pad_to_multiple`: keep the top-left (H, W) region."""
    h, w = original_size
    if padded.shape[-2] < h or padded.shape[-1] < w:
        raise DimensionError(f"cannot crop {tuple(padded.shape[-2:])} back to ({h}, {w})")
    return padded[..., :h, :w]


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(F.relu(self.conv1(x)))


class Stage(nn.Module):
    """A sequence of residual blocks at a fixed width, named block0..blockN."""

    def __init__(self, channels: int, num_blocks: int):
        super().__init__()
        self.num_blocks = num_blocks
        for j in range(num_blocks):
            self.add_module(f"block{j}", ResidualBlock(channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for j in range(self.num_blocks):
            x = getattr(self, f"block{j}")(x)
        return x


class QualityGate(nn.Module):
    """Convex blend of skip and decoder features, gated by a learned map.

    A small autoencoder (1x1 reduce, ``depth`` stride-2 convs, mirrored
    stride-2 transposed convs, 3x3 output conv, sigmoid) sees the
    channel-concatenation [skip, decoder] and emits a single-channel map
    ``g`` in [0, 1] broadcast over all channels:

        out = g * skip + (1 - g) * decoder

    Odd spatial sizes are replication-padded to a multiple of 2**depth
    internally and the map is cropped back, so the map always matches the
    feature resolution exactly.
    """

    def __init__(self, channels: int, attention_channels: int, depth: int):
        super().__init__()
        self.depth = depth
        self.reduce = nn.Conv2d(2 * channels, attention_channels, 1)
        for k in range(depth):
            self.add_module(f"down{k}", nn.Conv2d(attention_channels, attention_channels, 3, stride=2, padding=1))
        for k in range(depth):
            self.add_module(
                f"up{k}",
                nn.ConvTranspose2d(attention_channels, attention_channels, 3, stride=2, padding=1, output_padding=1),
            )
        self.out = nn.Conv2d(attention_channels, 1, 3, padding=1)

    def gate_map(self, x_skip: torch.Tensor, x_decoder: torch.Tensor) -> torch.Tensor:
        x = torch.cat([x_skip, x_decoder], dim=1)
        x, size = pad_to_multiple(x, 2**self.depth)
        x = F.relu(self.reduce(x))
        for k in range(self.depth):
            x = F.relu(getattr(self, f"down{k}")(x))
        for k in range(self.depth):
            x = F.relu(getattr(self, f"up{k}")(x))
        return crop_back(torch.sigmoid(self.out(x)), size)

    def forward(
        self,
        x_skip: torch.Tensor,
        x_decoder: torch.Tensor,
        gate_override: float | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Return (blended features, gate map).

        ``gate_override`` (testing hook) replaces the learned map with a
        constant in [0, 1]; 0 and 1 reproduce the decoder/skip branch
        exactly.
        """
        if x_skip.shape != x_decoder.shape:
            raise DimensionError(f"skip/decoder shape mismatch: {tuple(x_skip.shape)} vs {tuple(x_decoder.shape)}")
        if gate_override is not None:
            if not 0.0 <= gate_override <= 1.0:
                raise InputError(f"gate_override must be in [0, 1], got {gate_override}")
            b, _, h, w = x_skip.shape
            g = torch.full((b, 1, h, w), gate_override, dtype=x_skip.dtype, device=x_skip.device)
            if gate_override == 1.0:
                return x_skip, g
            if gate_override == 0.0:
                return x_decoder, g
        else:
            g = self.gate_map(x_skip, x_decoder)
        return g * x_skip + (1.0 - g) * x_decoder, g


class RestorationNet(nn.Module):
    """Residual U-Net trunk with a :class:`QualityGate` at each decoder merge.

    The forward pass is a pure function of (parameters, input): it is safe
    to run concurrently on shared read-only parameters. ``gate_override``
    (attribute or forward argument) is a testing hook that freezes every
    gate at a constant.
    """

    def __init__(self, config: ModelConfig):
        config.validate()
        super().__init__()
        self.config = config
        self.gate_override: float | None = None

        s_max = config.num_scales - 1
        self.head = nn.Conv2d(config.input_channels, config.width(0), 3, padding=1)

        self.encoder = nn.Module()
        for s in range(config.num_scales):
            self.encoder.add_module(f"stage{s}", Stage(config.width(s), config.res_blocks_per_stage))
        for s in range(s_max):
            self.encoder.add_module(f"down{s}", nn.Conv2d(config.width(s), config.width(s + 1), 3, stride=2, padding=1))

        self.decoder = nn.Module()
        for s in range(s_max):
            self.decoder.add_module(
                f"up{s}",
                nn.ConvTranspose2d(config.width(s + 1), config.width(s), 3, stride=2, padding=1, output_padding=1),
            )
            self.decoder.add_module(
                f"gate{s}", QualityGate(config.width(s), config.attention_channels, config.attention_depth)
            )
            self.decoder.add_module(f"stage{s}", Stage(config.width(s), config.res_blocks_per_stage))

        self.tail = nn.Conv2d(config.width(0), config.input_channels, 3, padding=1)

    def forward(self, batch: torch.Tensor, gate_override: float | None = None) -> RestorationOutput:
        validate_image_batch(batch, self.config.input_channels)
        if gate_override is None:
            gate_override = self.gate_override
        h, w = batch.shape[-2:]
        x, _ = pad_to_multiple(batch, self.config.pad_factor)

        s_max = self.config.num_scales - 1
        feat = self.head(x)
        skips = []
        for s in range(self.config.num_scales):
            feat = getattr(self.encoder, f"stage{s}")(feat)
            if s < s_max:
                skips.append(feat)
                feat = getattr(self.encoder, f"down{s}")(feat)

        maps: list[torch.Tensor | None] = [None] * s_max
        for s in range(s_max - 1, -1, -1):
            feat = getattr(self.decoder, f"up{s}")(feat)
            feat, g = getattr(self.decoder, f"gate{s}")(skips[s], feat, gate_override)
            maps[s] = g
            feat = getattr(self.decoder, f"stage{s}")(feat)

        correction = self.tail(feat)
        restored = x + correction if self.config.global_input_residual else correction
        restored = crop_back(restored, (h, w))
        # gate maps live at stride 2**s; their natural size is the ceil division
        maps = [crop_back(g, (math.ceil(h / 2**s), math.ceil(w / 2**s))) for s, g in enumerate(maps)]
        return RestorationOutput(restored=restored, quality_maps=maps)

    def count_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(config: ModelConfig, seed: int) -> RestorationNet:
    """Construct a :class:`RestorationNet` with deterministic initialisation.

    All convolutions use fan-in-scaled uniform initialisation (weights in
    +-sqrt(1/fan_in)); each gate's output bias is zeroed so the maps start
    near 0.5. The global RNG state is left untouched.
    """
    config.validate()
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        net = RestorationNet(config)
        for s in range(config.num_gates):
            gate = getattr(net.decoder, f"gate{s}")
            nn.init.zeros_(gate.out.bias)
    return net
