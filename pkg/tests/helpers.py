"""Shared fixtures' building blocks: synthetic images and score tables."""

import numpy as np


def synth_image(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Natural-ish test image: smooth color gradients, hard-edged shapes, a
    disc, and mild sensor-style noise, so JPEG has both flat regions to
    block up and edges to ring on. float32 RGB in [0, 1]."""
    yy, xx = np.meshgrid(np.linspace(0, 1, height), np.linspace(0, 1, width), indexing="ij")
    img = np.stack(
        [
            0.55 + 0.35 * np.sin(2 * np.pi * (xx * rng.uniform(0.5, 2.0) + rng.uniform(0, 1))),
            0.5 + 0.4 * yy * rng.uniform(0.5, 1.0) - 0.15 * xx,
            0.45 + 0.3 * np.cos(2 * np.pi * (yy * rng.uniform(0.5, 1.5) + xx * 0.3)),
        ],
        axis=-1,
    )
    for _ in range(6):
        i0 = int(rng.integers(0, max(1, height - 8)))
        j0 = int(rng.integers(0, max(1, width - 8)))
        hh = int(rng.integers(4, max(5, height // 3)))
        ww = int(rng.integers(4, max(5, width // 3)))
        img[i0 : i0 + hh, j0 : j0 + ww] = rng.uniform(0.05, 0.95, size=3)
    ci, cj = height // 2, width // 2
    rad = max(2, min(height, width) // 5)
    ii, jj = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    disc = (ii - ci) ** 2 + (jj - cj) ** 2 < rad**2
    img[disc] = img[disc] * 0.3 + 0.7 * rng.uniform(0.1, 0.9, size=3)
    img += rng.normal(0, 0.015, img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def textured_image(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Deterministic fine structure that JPEG damages at low QF but keeps
    at high QF: gratings, checkerboards, rings and sharp-edged rectangles
    over smooth color fields; no sensor noise. float32 RGB in [0, 1]."""
    yy, xx = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij")
    u, v = xx / width, yy / height
    img = np.stack(
        [
            0.5 + 0.25 * np.sin(2 * np.pi * (u * rng.uniform(0.5, 1.5) + rng.uniform(0, 1))),
            0.5 + 0.25 * np.cos(2 * np.pi * (v * rng.uniform(0.5, 1.5) + rng.uniform(0, 1))),
            0.5 + 0.2 * np.sin(2 * np.pi * (u + v) * rng.uniform(0.3, 0.9)),
        ],
        axis=-1,
    )
    for _ in range(4):
        i0 = int(rng.integers(0, height - 40))
        j0 = int(rng.integers(0, width - 40))
        hh = int(rng.integers(32, height // 2))
        ww = int(rng.integers(32, width // 2))
        i1, j1 = min(height, i0 + hh), min(width, j0 + ww)
        kind = rng.integers(0, 3)
        ys, xs = yy[i0:i1, j0:j1], xx[i0:i1, j0:j1]
        if kind == 0:
            period = rng.uniform(3.0, 8.0)
            angle = rng.uniform(0, np.pi)
            wave = 0.5 + 0.45 * np.sin(2 * np.pi * (xs * np.cos(angle) + ys * np.sin(angle)) / period)
            tex = np.stack([wave, wave, wave], axis=-1)
        elif kind == 1:
            cell = int(rng.integers(2, 5))
            check = ((ys.astype(int) // cell + xs.astype(int) // cell) % 2).astype(np.float64)
            tex = np.stack([0.15 + 0.7 * check] * 3, axis=-1)
        else:
            cy, cx = ys.mean(), xs.mean()
            r = np.hypot(ys - cy, xs - cx)
            ring = 0.5 + 0.45 * np.cos(2 * np.pi * r / rng.uniform(4.0, 9.0))
            tex = np.stack([ring, ring, ring], axis=-1)
        tint = rng.uniform(0.6, 1.0, size=3)
        img[i0:i1, j0:j1] = tex * tint
    for _ in range(3):
        i0 = int(rng.integers(0, height - 20))
        j0 = int(rng.integers(0, width - 20))
        hh = int(rng.integers(10, 40))
        ww = int(rng.integers(10, 40))
        img[i0 : i0 + hh, j0 : j0 + ww] = rng.uniform(0.05, 0.95, size=3)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def chw(image_hwc: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image_hwc.transpose(2, 0, 1))
