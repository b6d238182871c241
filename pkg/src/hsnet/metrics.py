"""PSNR / SSIM on the BT.601 luma channel with border shaving."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from hsnet.errors import DimensionError, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def to_luma(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"expected (3, H, W) RGB, got {img.shape}")
    r, g, b = img
    return (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0


def _prepare(a, b, crop_border: int, y_channel: bool):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 3:
        if y_channel:
            a, b = to_luma(a), to_luma(b)
    elif a.ndim != 2:
        raise ShapeError(f"expected (H, W) or (3, H, W), got {a.shape}")
    if crop_border:
        h, w = a.shape[-2:]
        if 2 * crop_border >= min(h, w):
            raise DimensionError(f"crop_border {crop_border} too large for {h}x{w}")
        a = a[..., crop_border:-crop_border, crop_border:-crop_border]
        b = b[..., crop_border:-crop_border, crop_border:-crop_border]
    return a, b


def psnr(a, b, crop_border: int = 0, y_channel: bool = True) -> float:
    """Peak signal-to-noise ratio for data in [0, 1]; ``inf`` when identical."""
    a, b = _prepare(a, b, crop_border, y_channel)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation, keep only windows fully inside the image
    half = len(g) // 2
    out = correlate1d(correlate1d(x, g, axis=-1, mode="constant"), g, axis=-2, mode="constant")
    return out[..., half:-half, half:-half] if half else out


def _ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    g = gaussian_window()
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a**2
    var_b = _filter_valid(b * b, g) - mu_b**2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def ssim(a, b, crop_border: int = 0, y_channel: bool = True) -> float:
    """Mean SSIM over all 11x11 Gaussian windows (sigma 1.5) inside the image."""
    a, b = _prepare(a, b, crop_border, y_channel)
    h, w = a.shape[-2:]
    if min(h, w) < SSIM_WINDOW:
        raise DimensionError(f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    if a.ndim == 3:
        return float(np.mean([_ssim_map(x, y).mean() for x, y in zip(a, b)]))
    return float(_ssim_map(a, b).mean())


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)  # (id, psnr, ssim)
    scale: int = 4
    crop_border: int = 4
    channel_mode: str = "y"

    def add(self, image_id: str, p: float, s: float) -> None:
        self.rows.append((image_id, p, s))

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r[1] for r in self.rows]))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r[2] for r in self.rows]))

    def write_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "psnr", "ssim"])
            for image_id, p, s in self.rows:
                writer.writerow([image_id, repr(float(p)), repr(float(s))])
            writer.writerow(["mean", repr(self.mean_psnr), repr(self.mean_ssim)])


def evaluate_pairs(pairs, predict, scale: int) -> EvalReport:
    """Score ``predict(lr) -> sr`` on every pair, shaving ``scale`` border pixels."""
    report = EvalReport(scale=scale, crop_border=scale)
    for pair in pairs:
        sr = np.clip(np.asarray(predict(pair.lr), dtype=np.float64), 0.0, 1.0)
        report.add(pair.id, psnr(sr, pair.hr, scale), ssim(sr, pair.hr, scale))
    return report
