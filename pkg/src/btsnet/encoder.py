"""Dual-branch residual encoder with BTS blocks between hierarchies.

Each branch is a bottleneck ResNet split into five hierarchies:

    0: stem conv (stride 2)            -> /2
    1: max-pool + layer1               -> /4
    2: layer2                          -> /8
    3: layer3                          -> /16
    4: layer4 (stride changed to 1)    -> /16

Layer names follow the torchvision ResNet layout so that an ImageNet
``state_dict`` can be dropped into either branch.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import torch
import torch.nn as nn

from .bts import BTS, BtsConfig
from .core_ops import ASPP, ConfigurationError, init_weights

EXPANSION = 4


class Scale(str, Enum):
    FULL = "full"
    TINY = "tiny"


class NormalizationError(ValueError):
    """Raised when an input image is outside its documented value range."""


@dataclass(frozen=True)
class BackboneConfig:
    stage_channels: Tuple[int, ...] = (64, 256, 512, 1024, 2048)
    stage_strides: Tuple[int, ...] = (2, 2, 2, 2, 1)
    input_size: Tuple[int, int] = (352, 352)
    scale: Scale = Scale.FULL
    blocks: Tuple[int, ...] = (3, 4, 6, 3)
    aspp_rates: Tuple[int, ...] = (1, 6, 12, 18)
    aspp_branch_channels: int = 256
    decoder_channels: int = 256

    def __post_init__(self):
        for name in ("stage_channels", "stage_strides", "blocks", "aspp_rates", "input_size"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        object.__setattr__(self, "scale", Scale(self.scale))
        if len(self.stage_channels) != 5 or len(self.stage_strides) != 5:
            raise ConfigurationError(
                f"exactly 5 hierarchies required, got {len(self.stage_channels)} channels "
                f"and {len(self.stage_strides)} strides"
            )
        if len(self.blocks) != 4:
            raise ConfigurationError(f"blocks must list 4 residual stages, got {self.blocks}")
        if self.stage_strides[-1] != 1:
            raise ConfigurationError("the last hierarchy must have stride 1")
        if any(s not in (1, 2) for s in self.stage_strides):
            raise ConfigurationError(f"strides must be 1 or 2, got {self.stage_strides}")
        if any(c <= 0 for c in self.stage_channels) or any(b <= 0 for b in self.blocks):
            raise ConfigurationError("channels and block counts must be positive")
        if any(c % EXPANSION for c in self.stage_channels[1:]):
            raise ConfigurationError(
                f"residual stage widths must be divisible by {EXPANSION}: {self.stage_channels}"
            )

    @classmethod
    def full(cls):
        return cls()

    @classmethod
    def tiny(cls, input_size=(32, 32)):
        # 16x16 inputs reach 1x1 at /16, so every ASPP rate must stay at 1.
        # k=64: narrower decoders cannot reach a low loss in a few hundred Adam steps
        return cls(
            stage_channels=(4, 8, 8, 16, 16),
            input_size=tuple(input_size),
            scale=Scale.TINY,
            blocks=(1, 1, 1, 1),
            aspp_rates=(1, 1, 1, 1),
            aspp_branch_channels=8,
            decoder_channels=64,
        )

    @classmethod
    def for_scale(cls, scale, input_size=None):
        if Scale(scale) is Scale.FULL:
            return cls() if input_size is None else cls(input_size=tuple(input_size))
        return cls.tiny() if input_size is None else cls.tiny(input_size)

    def cumulative_strides(self) -> List[int]:
        """Output stride of each of the 6 pyramid levels relative to the input."""
        out, acc = [], 1
        for s in self.stage_strides:
            acc *= s
            out.append(acc)
        return out + [acc]

    def pyramid_channels(self) -> List[int]:
        return list(self.stage_channels) + [self.stage_channels[-1]]

    def to_dict(self):
        return {
            "stage_channels": list(self.stage_channels),
            "stage_strides": list(self.stage_strides),
            "input_size": list(self.input_size),
            "scale": self.scale.value,
            "blocks": list(self.blocks),
            "aspp_rates": list(self.aspp_rates),
            "aspp_branch_channels": self.aspp_branch_channels,
            "decoder_channels": self.decoder_channels,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        base = cls.for_scale(d.pop("scale", "full")).to_dict()
        base.update(d)
        return cls(**base)


class FeaturePyramid(list):
    """The six per-branch features ``f^0 .. f^5`` (five hierarchies + ASPP)."""

    def shapes(self):
        return [tuple(t.shape[1:]) for t in self]


class Bottleneck(nn.Module):
    def __init__(self, in_channels, width, stride=1):
        super().__init__()
        out_channels = width * EXPANSION
        self.conv1 = nn.Conv2d(in_channels, width, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(width)
        self.conv2 = nn.Conv2d(width, width, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(width)
        self.conv3 = nn.Conv2d(width, out_channels, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU()
        self.downsample = None
        if stride != 1 or in_channels != out_channels:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        return self.relu(out + identity)


def _make_layer(in_channels, out_channels, blocks, stride):
    width = out_channels // EXPANSION
    layers = [Bottleneck(in_channels, width, stride)]
    layers += [Bottleneck(out_channels, width) for _ in range(blocks - 1)]
    return nn.Sequential(*layers)


class Backbone(nn.Module):
    """One residual branch exposing its five hierarchies individually."""

    def __init__(self, cfg: BackboneConfig, in_channels: int = 3):
        super().__init__()
        c, s = cfg.stage_channels, cfg.stage_strides
        self.conv1 = nn.Conv2d(in_channels, c[0], 7, stride=s[0], padding=3, bias=False)
        self.bn1 = nn.BatchNorm2d(c[0])
        self.relu = nn.ReLU()
        self.maxpool = nn.MaxPool2d(3, stride=2, padding=1) if s[1] == 2 else nn.Identity()
        self.layer1 = _make_layer(c[0], c[1], cfg.blocks[0], 1)
        self.layer2 = _make_layer(c[1], c[2], cfg.blocks[1], s[2])
        self.layer3 = _make_layer(c[2], c[3], cfg.blocks[2], s[3])
        self.layer4 = _make_layer(c[3], c[4], cfg.blocks[3], s[4])

    def hierarchy(self, i: int, x):
        if i == 0:
            return self.relu(self.bn1(self.conv1(x)))
        if i == 1:
            return self.layer1(self.maxpool(x))
        return getattr(self, f"layer{i}")(x)


def depth_stem(depth: torch.Tensor) -> torch.Tensor:
    """Replicate a single-channel depth map in [0, 1] to three channels."""
    if depth.dim() != 4 or depth.shape[1] != 1:
        raise ConfigurationError(f"depth must be (B, 1, H, W), got {tuple(depth.shape)}")
    lo, hi = float(depth.detach().min()), float(depth.detach().max())
    if lo < 0.0 or hi > 1.0:
        raise NormalizationError(f"depth values must lie in [0, 1], got range [{lo}, {hi}]")
    return depth.expand(-1, 3, -1, -1)


class DualEncoder(nn.Module):
    """RGB and depth backbones, five BTS blocks (optional) and one ASPP per branch.

    ``bts_cfg=None`` builds the plain two-stream encoder without BTS, used for
    parameter audits.
    """

    def __init__(self, cfg: BackboneConfig, bts_cfg: Optional[BtsConfig] = BtsConfig()):
        super().__init__()
        self.cfg = cfg
        self.bts_cfg = bts_cfg
        self.rgb = Backbone(cfg)
        self.depth = Backbone(cfg)
        self.bts = None
        if bts_cfg is not None:
            self.bts = nn.ModuleList(BTS(ch, bts_cfg) for ch in cfg.stage_channels)
        top = cfg.stage_channels[-1]
        self.aspp_r = ASPP(top, top, cfg.aspp_rates, cfg.aspp_branch_channels)
        self.aspp_d = ASPP(top, top, cfg.aspp_rates, cfg.aspp_branch_channels)
        init_weights(self)

    def forward(self, rgb, depth) -> Tuple[FeaturePyramid, FeaturePyramid]:
        if depth.shape[1] == 1:
            depth = depth_stem(depth)
        if rgb.shape[1] != 3 or depth.shape[1] != 3:
            raise ConfigurationError("rgb must have 3 channels and depth 1 or 3")
        if rgb.shape[-2:] != depth.shape[-2:] or rgb.shape[0] != depth.shape[0]:
            raise ConfigurationError(
                f"rgb {tuple(rgb.shape)} and depth {tuple(depth.shape)} extents differ"
            )
        x_r, x_d = rgb, depth
        pyr_r, pyr_d = [], []
        for i in range(5):
            bf_r = self.rgb.hierarchy(i, x_r)
            bf_d = self.depth.hierarchy(i, x_d)
            if self.bts is not None:
                x_r, x_d = self.bts[i](bf_r, bf_d)
            else:
                x_r, x_d = bf_r, bf_d
            pyr_r.append(x_r)
            pyr_d.append(x_d)
        pyr_r.append(self.aspp_r(x_r))
        pyr_d.append(self.aspp_d(x_d))
        return FeaturePyramid(pyr_r), FeaturePyramid(pyr_d)

    def load_backbone_weights(self, state_dict, branch="both", key_map=None):
        """Load (e.g. ImageNet) ResNet weights into one or both branches.

        ``key_map`` renames source keys before loading; keys that match
        nothing (such as a classifier) are ignored. Returns the list of branch
        parameters left at their random initialisation.
        """
        if key_map:
            state_dict = {key_map.get(k, k): v for k, v in state_dict.items()}
        targets = {"rgb": [self.rgb], "depth": [self.depth], "both": [self.rgb, self.depth]}[branch]
        missing = []
        for net in targets:
            own = net.state_dict()
            usable = {k: v for k, v in state_dict.items() if k in own and own[k].shape == v.shape}
            result = net.load_state_dict(usable, strict=False)
            missing.extend(result.missing_keys)
        return missing


def build_encoder(backbone_cfg: BackboneConfig, bts_cfg: Optional[BtsConfig] = BtsConfig()) -> DualEncoder:
    return DualEncoder(backbone_cfg, bts_cfg)
