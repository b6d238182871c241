"""Image I/O, bicubic degradation, paired cropping and dihedral augmentation.

Images are float arrays shaped (3, H, W) with values in [0, 1].
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from hsnet.errors import ConfigError, DimensionError, ShapeError

BICUBIC_A = -0.5


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def to_uint8(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    return np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(path, img) -> None:
    Image.fromarray(to_uint8(img).transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def cubic(x: np.ndarray, a: float = BICUBIC_A) -> np.ndarray:
    ax = np.abs(x)
    ax2, ax3 = ax**2, ax**3
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


def resize_weights(in_len: int, out_len: int) -> np.ndarray:
    """(out_len, in_len) bicubic resampling matrix, antialiased when shrinking.

    Pixel-center alignment and symmetric boundary handling follow the usual
    imresize convention used to build SR benchmarks.
    """
    scale = out_len / in_len
    if scale < 1:
        width = 4.0 / scale
        kernel = lambda t: scale * cubic(scale * t)  # noqa: E731
    else:
        width = 4.0
        kernel = cubic
    x = np.arange(1, out_len + 1, dtype=np.float64)
    u = x / scale + 0.5 * (1 - 1 / scale)
    left = np.floor(u - width / 2)
    taps = int(math.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    wts = kernel(u[:, None] - idx)
    wts /= wts.sum(axis=1, keepdims=True)
    mirror = np.concatenate([np.arange(in_len), np.arange(in_len)[::-1]])
    src = mirror[np.mod(idx.astype(np.int64) - 1, 2 * in_len)]
    mat = np.zeros((out_len, in_len))
    rows = np.repeat(np.arange(out_len), taps)
    np.add.at(mat, (rows, src.ravel()), wts.ravel())
    return mat


def imresize(img: np.ndarray, out_h: int, out_w: int, clip: bool = True) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    wh = resize_weights(img.shape[-2], out_h)
    ww = resize_weights(img.shape[-1], out_w)
    out = np.einsum("ih,chw,jw->cij", wh, img, ww)
    return np.clip(out, 0.0, 1.0) if clip else out


def bicubic_downscale(img: np.ndarray, s: int) -> np.ndarray:
    h, w = img.shape[-2:]
    if h % s or w % s:
        raise DimensionError(f"image {h}x{w} not divisible by scale {s}")
    if s == 1:
        return np.asarray(img, dtype=np.float64).copy()
    return imresize(img, h // s, w // s)


def bicubic_upscale(img: np.ndarray, s: int) -> np.ndarray:
    h, w = img.shape[-2:]
    return imresize(img, h * s, w * s)


def mod_crop(img: np.ndarray, s: int) -> np.ndarray:
    h, w = img.shape[-2:]
    return img[..., : h - h % s, : w - w % s]


@dataclass
class ImagePair:
    hr: np.ndarray
    lr: np.ndarray
    id: str = ""

    @property
    def scale(self) -> int:
        return self.hr.shape[-1] // self.lr.shape[-1]


def make_pair(hr: np.ndarray, s: int, id: str = "", lr: np.ndarray | None = None) -> ImagePair:
    hr = mod_crop(np.asarray(hr, dtype=np.float32), s)
    if lr is None:
        lr = bicubic_downscale(hr, s).astype(np.float32)
    if lr.shape[-2] * s != hr.shape[-2] or lr.shape[-1] * s != hr.shape[-1]:
        raise ShapeError(f"{id}: LR {lr.shape} does not match HR {hr.shape} at x{s}")
    return ImagePair(hr=hr, lr=np.asarray(lr, dtype=np.float32), id=id)


@dataclass
class DatasetManifest:
    root: Path
    entries: list = field(default_factory=list)  # (hr_path, lr_path | None)
    scale: int = 4

    @classmethod
    def load(cls, path, scale: int | None = None) -> "DatasetManifest":
        """Read a JSON manifest or a text file with one ``hr [lr]`` entry per line."""
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"manifest not found: {path}")
        root = path.parent
        text = path.read_text()
        if path.suffix == ".json":
            doc = json.loads(text)
            root = root / doc.get("root", ".")
            entries = []
            for e in doc["entries"]:
                if isinstance(e, str):
                    entries.append((e, None))
                else:
                    entries.append((e["hr"], e.get("lr")))
            scale = scale or doc.get("scale", 4)
        else:
            entries = []
            for line in text.splitlines():
                line = line.split("#", 1)[0].strip()
                if line:
                    parts = line.split()
                    entries.append((parts[0], parts[1] if len(parts) > 1 else None))
            scale = scale or 4
        if not entries:
            raise ConfigError(f"manifest {path} lists no images")
        return cls(root=root, entries=entries, scale=scale)

    def pairs(self) -> list[ImagePair]:
        out = []
        for hr_path, lr_path in self.entries:
            hr_file = self.root / hr_path
            if not hr_file.is_file():
                raise FileNotFoundError(f"image not found: {hr_file}")
            lr = load_image(self.root / lr_path) if lr_path else None
            out.append(make_pair(load_image(hr_file), self.scale, id=Path(hr_path).stem, lr=lr))
        return out


def write_manifest(path, hr_paths, scale: int) -> None:
    path = Path(path)
    doc = {"root": ".", "scale": scale, "entries": [{"hr": str(p)} for p in hr_paths]}
    path.write_text(json.dumps(doc, indent=2))


def crop_pair(pair: ImagePair, lr_patch: int, rng: np.random.Generator):
    """Aligned random crop; the HR corner is ``scale`` times the LR corner."""
    s = pair.scale
    lh, lw = pair.lr.shape[-2:]
    if lh < lr_patch or lw < lr_patch:
        raise DimensionError(f"{pair.id}: LR {lh}x{lw} smaller than patch {lr_patch}")
    r = int(rng.integers(0, lh - lr_patch + 1))
    c = int(rng.integers(0, lw - lr_patch + 1))
    lr = pair.lr[:, r : r + lr_patch, c : c + lr_patch]
    hr = pair.hr[:, s * r : s * (r + lr_patch), s * c : s * (c + lr_patch)]
    return lr, hr


def dihedral(img: np.ndarray, k: int) -> np.ndarray:
    """Element ``k`` of the 8-element dihedral group: rotate ``k % 4`` quarter turns, then flip if ``k >= 4``."""
    out = np.rot90(img, k % 4, axes=(-2, -1))
    if k >= 4:
        out = out[..., ::-1]
    return out


def augment(lr: np.ndarray, hr: np.ndarray, rng: np.random.Generator):
    k = int(rng.integers(0, 8))
    return np.ascontiguousarray(dihedral(lr, k)), np.ascontiguousarray(dihedral(hr, k))


def sample_batch(pairs, batch_size: int, lr_patch: int, rng: np.random.Generator, augment_data: bool = True):
    lrs, hrs = [], []
    for _ in range(batch_size):
        pair = pairs[int(rng.integers(0, len(pairs)))]
        lr, hr = crop_pair(pair, lr_patch, rng)
        if augment_data:
            lr, hr = augment(lr, hr, rng)
        lrs.append(lr)
        hrs.append(hr)
    return torch.from_numpy(np.stack(lrs)).float(), torch.from_numpy(np.stack(hrs)).float()


def synthetic_image(size: int, rng: np.random.Generator) -> np.ndarray:
    """Procedural RGB test card: gratings, hard-edged shapes and a smooth ramp."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    img = np.empty((3, size, size))
    base = rng.uniform(0.2, 0.8, size=3)
    ramp = rng.uniform(-0.2, 0.2, size=(3, 2))
    for ch in range(3):
        img[ch] = base[ch] + ramp[ch, 0] * xx + ramp[ch, 1] * yy
    for _ in range(2):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(4, 12)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        img += rng.uniform(0.05, 0.2, size=(3, 1, 1)) * np.sign(wave) * rng.choice([0.0, 1.0])
        img += rng.uniform(0.05, 0.15, size=(3, 1, 1)) * wave
    for _ in range(int(rng.integers(3, 7))):
        color = rng.uniform(0, 1, size=(3, 1, 1))
        cy, cx = rng.uniform(0, 1, size=2)
        r = rng.uniform(0.08, 0.3)
        if rng.random() < 0.5:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r**2
        else:
            mask = (np.abs(yy - cy) < r) & (np.abs(xx - cx) < r * rng.uniform(0.3, 1.0))
        img = np.where(mask[None], color, img)
    return np.clip(img, 0, 1).astype(np.float32)


def synthetic_dataset(directory, n: int, size: int, scale: int, seed: int = 0) -> Path:
    """Write ``n`` synthetic PNGs plus ``manifest.json``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    names = []
    for i in range(n):
        name = f"synth_{i:03d}.png"
        save_image(directory / name, synthetic_image(size, rng))
        names.append(name)
    manifest = directory / "manifest.json"
    write_manifest(manifest, names, scale)
    return manifest
