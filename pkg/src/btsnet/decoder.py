"""Light-weight group decoder and the U-net baseline it is compared against.

Group decoder, per modality m in {r, d}:

    f_mt^i = BConv3x3(f_m^i -> k)                       i = 0..5
    f_m^h  = f_mt^3 + f_mt^4 + f_mt^5                   (/16 grid)
    f_m^l  = f_mt^0 + Up(f_mt^1) + Up(f_mt^2)           (/2 grid)

Fusion and prediction:

    f_c^h = BConv3x3([f_r^h * f_d^h, f_r^h + f_d^h])
    f_c^l = BConv3x3([f_r^l * f_d^l, f_r^l + f_d^l])
    S_c   = P([Up(f_c^h), f_c^l])
    S_m   = P_m([Up(f_m^h), f_m^l])

``P`` is a :class:`~btsnet.core_ops.PredictionHead`; every head has its own
weights.
"""

from typing import Dict, List, NamedTuple, Sequence, Tuple

import torch
import torch.nn as nn

from .core_ops import BConv, ConfigurationError, PredictionHead, count_parameters, upsample_bilinear

__all__ = [
    "DecoderOutput",
    "GroupDecoder",
    "UNetDecoder",
    "count_parameters",
    "unet_widths",
]


class DecoderOutput(NamedTuple):
    s_c: torch.Tensor
    s_r: torch.Tensor
    s_d: torch.Tensor


def _up_to(x, ref):
    return upsample_bilinear(x, ref.shape[-2], ref.shape[-1])


class GroupDecoder(nn.Module):
    def __init__(self, pyramid_channels: Sequence[int], k: int = 256):
        super().__init__()
        if len(pyramid_channels) != 6:
            raise ConfigurationError(f"expected 6 pyramid levels, got {len(pyramid_channels)}")
        self.k = k
        self.unify_r = nn.ModuleList(BConv(c, k, 3) for c in pyramid_channels)
        self.unify_d = nn.ModuleList(BConv(c, k, 3) for c in pyramid_channels)
        self.fuse_h = BConv(2 * k, k, 3)
        self.fuse_l = BConv(2 * k, k, 3)
        self.head_c = PredictionHead(2 * k, k)
        self.head_r = PredictionHead(2 * k, k)
        self.head_d = PredictionHead(2 * k, k)

    def unify(self, pyramid, modality: str) -> List[torch.Tensor]:
        convs = self.unify_r if modality == "r" else self.unify_d
        return [conv(f) for conv, f in zip(convs, pyramid)]

    @staticmethod
    def group(unified: Sequence[torch.Tensor]) -> Tuple[torch.Tensor, torch.Tensor]:
        """Sum same-level features into a high (/16) and a low (/2) group."""
        f0, f1, f2, f3, f4, f5 = unified
        if not (f3.shape == f4.shape == f5.shape):
            raise ConfigurationError(
                "high-level features must share one grid: "
                f"{tuple(f3.shape)}, {tuple(f4.shape)}, {tuple(f5.shape)}"
            )
        for f in (f1, f2):
            if f.shape[-2] > f0.shape[-2] or f.shape[-1] > f0.shape[-1]:
                raise ConfigurationError("low-level features must be no larger than f^0")
        f_h = f3 + f4 + f5
        f_l = f0 + _up_to(f1, f0) + _up_to(f2, f0)
        return f_h, f_l

    def fuse_features(self, f_r_h, f_r_l, f_d_h, f_d_l):
        f_c_h = self.fuse_h(torch.cat([f_r_h * f_d_h, f_r_h + f_d_h], dim=1))
        f_c_l = self.fuse_l(torch.cat([f_r_l * f_d_l, f_r_l + f_d_l], dim=1))
        return f_c_h, f_c_l

    def fuse(self, f_r_h, f_r_l, f_d_h, f_d_l, size):
        f_c_h, f_c_l = self.fuse_features(f_r_h, f_r_l, f_d_h, f_d_l)
        return self.head_c(torch.cat([_up_to(f_c_h, f_c_l), f_c_l], dim=1), size)

    def branch_predict(self, f_h, f_l, modality: str, size):
        head = self.head_r if modality == "r" else self.head_d
        return head(torch.cat([_up_to(f_h, f_l), f_l], dim=1), size)

    def forward(self, pyr_r, pyr_d, size) -> DecoderOutput:
        f_r_h, f_r_l = self.group(self.unify(pyr_r, "r"))
        f_d_h, f_d_l = self.group(self.unify(pyr_d, "d"))
        return DecoderOutput(
            self.fuse(f_r_h, f_r_l, f_d_h, f_d_l, size),
            self.branch_predict(f_r_h, f_r_l, "r", size),
            self.branch_predict(f_d_h, f_d_l, "d", size),
        )

    def components(self) -> Dict[str, List[nn.Module]]:
        """Module groups behind each decoding path, for parameter audits."""
        return {
            "unify": [self.unify_r, self.unify_d],
            "GD-C": [self.fuse_h, self.fuse_l, self.head_c],
            "GD-R": [self.head_r],
            "GD-D": [self.head_d],
        }


def unet_widths(k: int) -> Tuple[int, ...]:
    """Decoder stage widths for levels 4, 3, 2, 1, 0."""
    return (2 * k, 2 * k, 2 * k, 2 * k, k)


class UNetDecoder(nn.Module):
    """Typical U-net decoder over per-level RGB/depth concatenations.

    Inputs are the unified k-channel features of both branches; each level is
    concatenated to ``2k`` channels. Starting from level 5, every stage
    upsamples, concatenates the next skip and applies two 3x3 BConvs. The
    same kind of prediction head as the group decoder produces ``S_c``.
    """

    def __init__(self, k: int = 256, widths: Sequence[int] = None):
        super().__init__()
        widths = tuple(widths or unet_widths(k))
        if len(widths) != 5:
            raise ConfigurationError(f"U-net needs 5 stage widths, got {widths}")
        self.widths = widths
        stages = []
        in_ch = 2 * k
        for w in widths:
            stages.append(nn.Sequential(BConv(in_ch + 2 * k, w, 3), BConv(w, w, 3)))
            in_ch = w
        self.stages = nn.ModuleList(stages)
        self.head = PredictionHead(in_ch, k)

    def forward(self, unified_r, unified_d, size):
        levels = [torch.cat([r, d], dim=1) for r, d in zip(unified_r, unified_d)]
        x = levels[5]
        for stage, skip in zip(self.stages, reversed(levels[:5])):
            x = stage(torch.cat([_up_to(x, skip), skip], dim=1))
        return self.head(x, size)
