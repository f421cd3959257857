"""Adam training loop, checkpoints and saliency export."""

import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import torch
from PIL import Image

from ..data import DatasetSpec, Sample, load_dataset, preprocess, synthetic_dataset, to_batch
from ..loss import total_loss
from ..model import BTSNet
from .config import SyntheticSpec, TrainConfig, model_key_diff

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class NonFiniteLossError(RuntimeError):
    def __init__(self, epoch, step, stems, dump_path=None):
        self.stems = list(stems)
        self.dump_path = dump_path
        msg = f"non-finite loss at epoch {epoch} step {step}; batch stems: {', '.join(self.stems)}"
        if dump_path:
            msg += f" (batch dumped to {dump_path})"
        super().__init__(msg)


class CheckpointMismatchError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: TrainConfig
    model_state: dict
    optimizer_state: Optional[dict] = None
    epoch: int = 0
    history: List[float] = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(
            {
                "format_version": self.format_version,
                "config": self.config.to_dict(),
                "model_state": self.model_state,
                "optimizer_state": self.optimizer_state,
                "epoch": self.epoch,
                "history": list(self.history),
            },
            path,
        )
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        raw = torch.load(path, map_location="cpu", weights_only=False)
        version = raw.get("format_version")
        if version != FORMAT_VERSION:
            raise CheckpointMismatchError(f"unsupported checkpoint format version {version}")
        return cls(
            config=TrainConfig.from_dict(raw["config"]),
            model_state=raw["model_state"],
            optimizer_state=raw.get("optimizer_state"),
            epoch=raw.get("epoch", 0),
            history=list(raw.get("history", [])),
            format_version=version,
        )

    def build_model(self, config: Optional[TrainConfig] = None) -> BTSNet:
        """Rebuild the network; ``config`` (if given) must match the snapshot's structure."""
        if config is not None:
            diff = model_key_diff(self.config, config)
            if diff:
                raise CheckpointMismatchError(
                    f"config disagrees with checkpoint on: {', '.join(diff)}"
                )
        model = self.config.build_model().to(_dtype(self.config))
        own = set(model.state_dict())
        saved = set(self.model_state)
        if own != saved:
            divergent = sorted(own ^ saved)
            raise CheckpointMismatchError(
                "checkpoint parameters do not match the network: " + ", ".join(divergent[:10])
            )
        model.load_state_dict(self.model_state)
        return model


def _dtype(cfg: TrainConfig):
    return torch.float64 if cfg.dtype == "float64" else torch.float32


def seed_everything(seed: int):
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def resolve_samples(data) -> List[Sample]:
    if isinstance(data, SyntheticSpec):
        return synthetic_dataset(data.n, data.seed, data.size, data.depth_noise)
    if isinstance(data, DatasetSpec):
        return load_dataset(data)
    return list(data)


def _batches(order: Sequence[int], batch_size: int):
    batches = [list(order[i : i + batch_size]) for i in range(0, len(order), batch_size)]
    # BatchNorm cannot normalise a single 1x1 feature vector in training mode
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches.pop()
    return batches


def train(
    cfg: TrainConfig,
    data: Union[DatasetSpec, SyntheticSpec, Sequence[Sample]],
    out_dir=None,
    max_steps: Optional[int] = None,
    on_epoch: Optional[Callable[[int, float], None]] = None,
) -> Checkpoint:
    """Minimise the three-way BCE loss with Adam.

    The learning rate is ``cfg.lr`` until ``cfg.lr_drop_epoch`` and then
    ``cfg.lr / cfg.lr_drop_factor``. A checkpoint is written to ``out_dir``
    every ``cfg.checkpoint_every`` epochs and at the end; the returned
    checkpoint is the last epoch's. ``max_steps`` caps the number of
    optimiser steps.
    """
    seed_everything(cfg.seed)
    torch.use_deterministic_algorithms(True)
    dtype = _dtype(cfg)
    size = cfg.backbone_config().input_size
    samples = [preprocess(s, size, train=False) for s in resolve_samples(data)]
    if not samples:
        raise ValueError("no training samples")

    # initial weights must not depend on the caller's default dtype
    prev = torch.get_default_dtype()
    torch.set_default_dtype(dtype)
    try:
        model = cfg.build_model()
    finally:
        torch.set_default_dtype(prev)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0)
    rng = np.random.default_rng(cfg.seed)
    out_dir = Path(out_dir) if out_dir else None
    history: List[float] = []
    step = 0
    epoch = 0
    for epoch in range(cfg.epochs):
        for group in opt.param_groups:
            group["lr"] = cfg.lr_at(epoch)
        losses = []
        for idx in _batches(rng.permutation(len(samples)), cfg.batch_size):
            batch = [samples[i] for i in idx]
            rgb, depth, gt = to_batch(batch, dtype)
            if cfg.augment:
                flip = torch.from_numpy(rng.random(len(batch)) < 0.5)
                if flip.any():
                    rgb[flip], depth[flip], gt[flip] = (t[flip].flip(-1) for t in (rgb, depth, gt))
            loss = total_loss(model(rgb, depth), gt, cfg.lambdas)
            if not torch.isfinite(loss):
                dump = None
                if out_dir:
                    out_dir.mkdir(parents=True, exist_ok=True)
                    dump = out_dir / "nonfinite_batch.npz"
                    np.savez(dump, rgb=rgb.numpy(), depth=depth.numpy(), gt=gt.numpy(),
                             stems=np.array([s.stem for s in batch]))
                raise NonFiniteLossError(epoch, step, [s.stem for s in batch], dump)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            losses.append(loss.item())
            step += 1
            if max_steps is not None and step >= max_steps:
                break
        history.append(float(np.mean(losses)))
        log.info("epoch %d lr %.2e loss %.6f", epoch, cfg.lr_at(epoch), history[-1])
        if on_epoch:
            on_epoch(epoch, history[-1])
        done = max_steps is not None and step >= max_steps
        if out_dir and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0 and not done:
            _snapshot(cfg, model, opt, epoch + 1, history).save(out_dir / f"epoch_{epoch + 1:04d}.pt")
        if done:
            break
    ckpt = _snapshot(cfg, model, opt, epoch + 1, history)
    if out_dir:
        ckpt.save(out_dir / "last.pt")
    return ckpt


def _snapshot(cfg, model, opt, epoch, history):
    return Checkpoint(
        config=cfg,
        model_state={k: v.detach().clone() for k, v in model.state_dict().items()},
        optimizer_state=opt.state_dict(),
        epoch=epoch,
        history=list(history),
    )


@torch.no_grad()
def predict(model: BTSNet, sample: Sample, size):
    """Run one raw sample; returns ``(S_c, S_r, S_d)`` numpy maps at the sample's own size."""
    model.eval()
    dtype = next(model.parameters()).dtype
    rgb, depth, _ = to_batch([preprocess(sample, size, train=False)], dtype)
    out = model(rgb, depth)
    h, w = sample.size
    maps = []
    for s in out:
        if s.shape[-2:] != (h, w):
            s = torch.nn.functional.interpolate(s, size=(h, w), mode="bilinear", align_corners=False)
        maps.append(s[0, 0].cpu().numpy())
    return maps


def _to_png(arr, path):
    img = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path)


def infer(
    ckpt: Union[Checkpoint, str, Path],
    inputs,
    out_dir,
    all_outputs: bool = False,
    config: Optional[TrainConfig] = None,
) -> List[Path]:
    """Write 8-bit saliency maps named by stem (``<stem>.png`` or ``<stem>_c/_r/_d.png``)."""
    if not isinstance(ckpt, Checkpoint):
        ckpt = Checkpoint.load(ckpt)
    model = ckpt.build_model(config)
    size = ckpt.config.backbone_config().input_size
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for sample in resolve_samples(inputs):
        s_c, s_r, s_d = predict(model, sample, size)
        if all_outputs:
            for suffix, m in (("c", s_c), ("r", s_r), ("d", s_d)):
                path = out_dir / f"{sample.stem}_{suffix}.png"
                _to_png(m, path)
                written.append(path)
        else:
            path = out_dir / f"{sample.stem}.png"
            _to_png(s_c, path)
            written.append(path)
    return written


def final_loss(ckpt: Checkpoint, data) -> float:
    """Loss over the whole (unaugmented) set in training-mode BatchNorm, without updating weights."""
    model = ckpt.build_model()
    size = ckpt.config.backbone_config().input_size
    samples = [preprocess(s, size, train=False) for s in resolve_samples(data)]
    rgb, depth, gt = to_batch(samples, _dtype(ckpt.config))
    model.train()
    with torch.no_grad():
        return float(total_loss(model(rgb, depth), gt, ckpt.config.lambdas))


__all__ = [
    "Checkpoint",
    "CheckpointMismatchError",
    "NonFiniteLossError",
    "final_loss",
    "infer",
    "predict",
    "train",
]
