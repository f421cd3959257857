"""RGB-D dataset ingestion, preprocessing and a synthetic scene generator.

On-disk layout (one directory per dataset)::

    root/RGB/<stem>.jpg|png
    root/depth/<stem>.png
    root/GT/<stem>.png

Ground truth is foreground where the 8-bit value exceeds 127. Larger depth
means nearer; datasets stored the other way round set ``invert_depth``.
"""

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

log = logging.getLogger(__name__)

DATA_ROOT_ENV = "BTSNET_DATA_ROOT"
RGB_MEAN = (0.485, 0.456, 0.406)
RGB_STD = (0.229, 0.224, 0.225)
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
SUBDIRS = ("RGB", "depth", "GT")


class DatasetError(ValueError):
    """Itemised problems found while reading a dataset directory."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class Sample:
    """One RGB-D example. Arrays are channel-first float32.

    ``rgb`` is (3, H, W), ``depth`` (1, H, W) and ``gt`` (1, H, W) in {0, 1}.
    """

    rgb: np.ndarray
    depth: np.ndarray
    gt: np.ndarray
    stem: str

    @property
    def size(self) -> Tuple[int, int]:
        return self.gt.shape[-2], self.gt.shape[-1]


@dataclass(frozen=True)
class DatasetSpec:
    root: str
    split: str = "train"
    name: str = ""
    invert_depth: bool = False

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be 'train' or 'test', got {self.split!r}")

    @property
    def path(self) -> Path:
        p = Path(self.root)
        if not p.is_absolute() and os.environ.get(DATA_ROOT_ENV):
            p = Path(os.environ[DATA_ROOT_ENV]) / p
        return p


def _index(directory: Path):
    return {p.stem: p for p in sorted(directory.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def _read(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        img.load()
        arr = np.asarray(img)
    return arr.astype(np.float32) / (65535.0 if arr.dtype == np.uint16 else 255.0)


def load_dataset(spec: DatasetSpec) -> List[Sample]:
    """Read every RGB/depth/GT triple under ``spec.root`` in sorted stem order."""
    root = spec.path
    missing = [d for d in SUBDIRS if not (root / d).is_dir()]
    if missing:
        raise DatasetError([f"{root}: missing subdirectory {d}/" for d in missing])
    rgb_idx, depth_idx, gt_idx = (_index(root / d) for d in SUBDIRS)
    stems = sorted(rgb_idx.keys() | depth_idx.keys() | gt_idx.keys())
    errors, samples = [], []
    for stem in stems:
        absent = [d for d, idx in zip(SUBDIRS, (rgb_idx, depth_idx, gt_idx)) if stem not in idx]
        if absent:
            errors.append(f"{stem}: absent from {', '.join(d + '/' for d in absent)}")
            continue
        try:
            rgb = _read(rgb_idx[stem])
            depth = _read(depth_idx[stem])
            gt = _read(gt_idx[stem])
        except OSError as exc:
            errors.append(f"{stem}: undecodable file ({exc})")
            continue
        if rgb.ndim == 2:
            rgb = np.repeat(rgb[..., None], 3, axis=2)
        rgb = rgb[..., :3]
        if depth.ndim == 3:
            depth = depth[..., :3].mean(axis=2)
        if gt.ndim == 3:
            gt = gt[..., :3].mean(axis=2)
        if spec.invert_depth:
            depth = 1.0 - depth
        if not (rgb.shape[:2] == depth.shape == gt.shape):
            errors.append(
                f"{stem}: extents differ (rgb {rgb.shape[:2]}, depth {depth.shape}, gt {gt.shape})"
            )
            continue
        samples.append(
            Sample(
                rgb=np.ascontiguousarray(rgb.transpose(2, 0, 1)),
                depth=depth[None].astype(np.float32),
                gt=(gt[None] > 127.0 / 255.0).astype(np.float32),
                stem=stem,
            )
        )
    if errors:
        raise DatasetError(errors)
    return samples


def _resize(a: np.ndarray, size, mode: str) -> np.ndarray:
    if a.shape[-2:] == tuple(size):
        return a
    t = torch.from_numpy(np.ascontiguousarray(a))[None]
    kwargs = {"align_corners": False} if mode == "bilinear" else {}
    return F.interpolate(t, size=tuple(size), mode=mode, **kwargs)[0].numpy()


def preprocess(
    sample: Sample,
    size=(352, 352),
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    mean=RGB_MEAN,
    std=RGB_STD,
) -> Sample:
    """Resize, standardise RGB, min-max depth and (train only) random h-flip.

    A depth map with zero range becomes a constant 0.5.
    """
    rgb = _resize(sample.rgb, size, "bilinear")
    depth = _resize(sample.depth, size, "bilinear")
    gt = _resize(sample.gt, size, "nearest")
    rgb = (rgb - np.asarray(mean, np.float32)[:, None, None]) / np.asarray(std, np.float32)[:, None, None]
    lo, hi = float(depth.min()), float(depth.max())
    depth = (depth - lo) / (hi - lo) if hi > lo else np.full_like(depth, 0.5)
    if train and rng is not None and rng.random() < 0.5:
        rgb, depth, gt = rgb[..., ::-1], depth[..., ::-1], gt[..., ::-1]
    return Sample(
        rgb=np.ascontiguousarray(rgb, dtype=np.float32),
        depth=np.ascontiguousarray(depth, dtype=np.float32),
        gt=np.ascontiguousarray(gt, dtype=np.float32),
        stem=sample.stem,
    )


def to_batch(samples: Sequence[Sample], dtype=torch.float32):
    rgb = torch.from_numpy(np.stack([s.rgb for s in samples])).to(dtype)
    depth = torch.from_numpy(np.stack([s.depth for s in samples])).to(dtype)
    gt = torch.from_numpy(np.stack([s.gt for s in samples])).to(dtype)
    return rgb, depth, gt


# ---------------------------------------------------------------------------
# synthetic scenes


def _shape_mask(kind, rng, h, w, yy, xx):
    cy, cx = rng.uniform(0.2, 0.8) * h, rng.uniform(0.2, 0.8) * w
    ry, rx = rng.uniform(0.1, 0.3) * h, rng.uniform(0.1, 0.3) * w
    if kind == 0:  # ellipse
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    if kind == 1:  # rectangle
        return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
    # triangle with apex on top
    inside_y = (yy >= cy - ry) & (yy <= cy + ry)
    half = rx * (yy - (cy - ry)) / (2 * ry)
    return inside_y & (np.abs(xx - cx) <= half)


def synthetic_scene(rng: np.random.Generator, size=(64, 64), depth_noise: float = 0.0, stem="synth"):
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    while True:
        n_shapes = int(rng.integers(1, 4))
        masks = [_shape_mask(int(rng.integers(0, 3)), rng, h, w, yy, xx) for _ in range(n_shapes)]
        gt = np.logical_or.reduce(masks)
        if 0.05 <= gt.mean() <= 0.6:
            break

    bg_color = rng.uniform(0.1, 0.6, size=3)
    freq = rng.uniform(0.1, 0.4)
    phase = rng.uniform(0, 2 * np.pi)
    texture = 0.1 * np.sin(freq * (xx + yy) + phase) + 0.05 * rng.standard_normal((h, w))
    rgb = bg_color[:, None, None] + texture[None]

    ramp = (yy / max(h - 1, 1)) * rng.uniform(0.0, 0.15)
    depth = rng.uniform(0.1, 0.25) + ramp
    for m in masks:
        color = rng.uniform(0.0, 1.0, size=3)
        while np.abs(color - bg_color).max() < 0.3:
            color = rng.uniform(0.0, 1.0, size=3)
        rgb[:, m] = color[:, None] + 0.03 * rng.standard_normal((3, int(m.sum())))
        depth = np.where(m, rng.uniform(0.6, 0.9), depth)
    if depth_noise > 0:
        depth = depth + depth_noise * rng.standard_normal((h, w))

    return Sample(
        rgb=np.clip(rgb, 0.0, 1.0).astype(np.float32),
        depth=np.clip(depth, 0.0, 1.0)[None].astype(np.float32),
        gt=gt[None].astype(np.float32),
        stem=stem,
    )


def synthetic_dataset(n: int, seed: int = 0, size=(64, 64), depth_noise: float = 0.0) -> List[Sample]:
    """Deterministic RGB-D scenes of 1-3 flat shapes nearer than a textured background.

    Noise-free depth thresholded at 0.5 reproduces the mask exactly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    children = np.random.SeedSequence(seed).spawn(n)
    return [
        synthetic_scene(np.random.default_rng(c), tuple(size), depth_noise, stem=f"synth_{i:04d}")
        for i, c in enumerate(children)
    ]


def write_dataset(samples: Sequence[Sample], root) -> Path:
    """Write raw (un-standardised) samples in the RGB/ depth/ GT/ layout as PNG."""
    root = Path(root)
    for d in SUBDIRS:
        (root / d).mkdir(parents=True, exist_ok=True)
    for s in samples:
        to8 = lambda a: np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)  # noqa: E731
        Image.fromarray(to8(s.rgb.transpose(1, 2, 0))).save(root / "RGB" / f"{s.stem}.png")
        Image.fromarray(to8(s.depth[0])).save(root / "depth" / f"{s.stem}.png")
        Image.fromarray(to8(s.gt[0])).save(root / "GT" / f"{s.stem}.png")
    return root
