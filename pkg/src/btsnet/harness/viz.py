"""Channel-mean feature heatmaps of encoder pyramid levels."""

from pathlib import Path
from typing import Iterable, List, Tuple, Union

import numpy as np
import torch
from matplotlib import colormaps
from PIL import Image

from ..core_ops import upsample_bilinear
from ..data import Sample, preprocess, to_batch
from .train import Checkpoint

COLORMAP = "jet"


def parse_level(level: Union[str, Tuple[str, int]]) -> Tuple[str, int]:
    """``"r3"`` or ``("r", 3)`` -> ``("r", 3)``."""
    if isinstance(level, str):
        m, i = level[:1], level[1:]
    else:
        m, i = level
    try:
        i = int(i)
    except (TypeError, ValueError):
        raise ValueError(f"unknown level {level!r}") from None
    if m not in ("r", "d") or not 0 <= i <= 5:
        raise ValueError(f"unknown level {level!r}; expected r0..r5 or d0..d5")
    return m, i


def feature_heatmap(feature: torch.Tensor, size) -> np.ndarray:
    """Channel mean of one (C, H, W) feature, min-max scaled, upsampled to ``size``.

    A constant map becomes 0.5 everywhere.
    """
    m = feature.detach().double().mean(dim=0)
    lo, hi = m.min(), m.max()
    m = (m - lo) / (hi - lo) if hi > lo else torch.full_like(m, 0.5)
    m = upsample_bilinear(m[None, None], *size)[0, 0]
    return m.clamp(0.0, 1.0).numpy()


def render(heat: np.ndarray) -> np.ndarray:
    rgba = colormaps[COLORMAP](heat)
    return (rgba[..., :3] * 255.0 + 0.5).astype(np.uint8)


@torch.no_grad()
def export_heatmaps(
    ckpt: Union[Checkpoint, str, Path],
    sample: Sample,
    levels: Iterable,
    out_dir,
) -> List[Path]:
    """Write ``<stem>_f<m><i>.png`` for every requested pyramid level."""
    parsed = [parse_level(lv) for lv in levels]
    if not isinstance(ckpt, Checkpoint):
        ckpt = Checkpoint.load(ckpt)
    model = ckpt.build_model()
    model.eval()
    size = ckpt.config.backbone_config().input_size
    dtype = next(model.parameters()).dtype
    rgb, depth, _ = to_batch([preprocess(sample, size)], dtype)
    pyr_r, pyr_d = model.encoder(rgb, depth)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for m, i in parsed:
        feature = (pyr_r if m == "r" else pyr_d)[i][0]
        path = out_dir / f"{sample.stem}_f{m}{i}.png"
        Image.fromarray(render(feature_heatmap(feature, size))).save(path)
        paths.append(path)
    return paths
