"""Neural building blocks shared by the encoder, BTS blocks and decoders.

All blocks operate on ``(batch, channel, row, col)`` tensors.
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


class ConfigurationError(ValueError):
    """Raised when a layer or model is wired with incompatible shapes or settings."""


class DegenerateInputError(ValueError):
    """Raised when an input is too small for the operation to be meaningful."""


class PreconditionError(ValueError):
    """Raised when an argument violates a documented precondition."""


def init_weights(module: nn.Module) -> None:
    """Fan-in scaled truncated-normal convolution weights, BN scale 1 / shift 0, zero biases."""
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            fan_in = m.in_channels // m.groups * m.kernel_size[0] * m.kernel_size[1]
            std = math.sqrt(2.0 / fan_in)
            nn.init.trunc_normal_(m.weight, mean=0.0, std=std, a=-2 * std, b=2 * std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def count_parameters(module: nn.Module) -> int:
    """Number of trainable scalars (conv weights, biases, BN affine pairs)."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def gap(x: torch.Tensor) -> torch.Tensor:
    """Global average pooling: (B, C, H, W) -> (B, C)."""
    return x.mean(dim=(2, 3))


def upsample_bilinear(x: torch.Tensor, target_h: int, target_w: int) -> torch.Tensor:
    """Bilinear up-sampling with half-pixel centers (``align_corners=False``).

    Output pixel ``i`` samples the source at ``(i + 0.5) * H / target_h - 0.5``,
    clamped to the source border.
    """
    h, w = x.shape[-2:]
    if target_h < h or target_w < w:
        raise PreconditionError(
            f"upsample target {target_h}x{target_w} is smaller than source {h}x{w}"
        )
    if (target_h, target_w) == (h, w):
        return x
    return F.interpolate(x, size=(target_h, target_w), mode="bilinear", align_corners=False)


class BConv(nn.Module):
    """Convolution -> BatchNorm -> ReLU with same padding and stride 1."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3, dilation: int = 1):
        super().__init__()
        if kernel not in (1, 3):
            raise ConfigurationError(f"BConv kernel must be 1 or 3, got {kernel}")
        padding = dilation * (kernel // 2)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.conv = nn.Conv2d(
            in_channels, out_channels, kernel, padding=padding, dilation=dilation, bias=False
        )
        self.bn = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU(inplace=False)

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ConfigurationError(
                f"BConv built for {self.in_channels} input channels, got {x.shape[1]}"
            )
        return self.relu(self.bn(self.conv(x)))


class SpatialAttention(nn.Module):
    """Single-channel 3x3 convolution followed by a sigmoid; answers "where"."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, 1, kernel_size=3, padding=1, bias=True)

    def forward(self, x):
        return torch.sigmoid(self.conv(x))


class ChannelSelect(nn.Module):
    """GAP -> 1x1 conv (C -> C) -> softmax over channels -> reweight the input.

    Returns ``(weights, selected)`` where ``weights`` is (B, C) and rows sum to 1.
    Because of the softmax, the selected features shrink by roughly 1/C.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, kernel_size=1, bias=True)

    def forward(self, x):
        pooled = gap(x)[:, :, None, None]
        weights = torch.softmax(self.conv(pooled).flatten(1), dim=1)
        return weights, x * weights[:, :, None, None]


class ASPP(nn.Module):
    """Atrous spatial pyramid pooling.

    One 1x1 branch for rate 1, one dilated 3x3 branch per other rate, plus an
    image-pooling branch. Branch outputs are concatenated and projected by a
    1x1 BConv to ``out_channels``.
    """

    def __init__(self, in_channels, out_channels, rates=(1, 6, 12, 18), branch_channels=256):
        super().__init__()
        self.rates = tuple(rates)
        self.branches = nn.ModuleList(
            BConv(in_channels, branch_channels, kernel=1)
            if r == 1
            else BConv(in_channels, branch_channels, kernel=3, dilation=r)
            for r in self.rates
        )
        self.pool_branch = BConv(in_channels, branch_channels, kernel=1)
        self.project = BConv(branch_channels * (len(self.rates) + 1), out_channels, kernel=1)

    def forward(self, x):
        h, w = x.shape[-2:]
        too_wide = [r for r in self.rates if r > max(h, w)]
        if too_wide:
            raise DegenerateInputError(
                f"ASPP dilation rate(s) {too_wide} exceed the {h}x{w} feature map; "
                "use smaller rates or a larger input"
            )
        outs = [branch(x) for branch in self.branches]
        pooled = self.pool_branch(x.mean(dim=(2, 3), keepdim=True))
        outs.append(pooled.expand(-1, -1, h, w))
        return self.project(torch.cat(outs, dim=1))


class PredictionHead(nn.Module):
    """BConv(3x3) -> BConv(3x3) -> 1x1 conv to one channel -> upsample -> sigmoid.

    Logits are upsampled before the sigmoid; interpolating probabilities would
    blur every object boundary into a fixed, unlearnable error.
    """

    def __init__(self, in_channels: int, k: int):
        super().__init__()
        self.conv1 = BConv(in_channels, k, kernel=3)
        self.conv2 = BConv(k, k, kernel=3)
        self.out = nn.Conv2d(k, 1, kernel_size=1, bias=True)

    def logits(self, x):
        return self.out(self.conv2(self.conv1(x)))

    def forward(self, x, size):
        return torch.sigmoid(upsample_bilinear(self.logits(x), *size))
