"""Bi-directional transfer-and-selection (BTS) block.

A BTS block takes same-stage RGB and depth features and returns attended
features of identical shape. Spatial attention from one modality gates the
other ("transfer"), then a softmax channel attention re-weights each branch
("selection"). :class:`BtsConfig` switches the connection pattern and stage
order to produce the interaction and attention-order ablation variants.
"""

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import torch
import torch.nn as nn

from .core_ops import ChannelSelect, ConfigurationError, SpatialAttention


class Direction(str, Enum):
    NONE = "none"
    R_TO_D = "r_to_d"  # RGB attention transferred into the depth branch
    D_TO_R = "d_to_r"  # depth attention transferred into the RGB branch
    BIDIRECTIONAL = "bidirectional"


class AttentionOrder(str, Enum):
    SA_ONLY = "sa_only"
    CA_THEN_SA = "ca_then_sa"
    SA_THEN_CA = "sa_then_ca"


@dataclass(frozen=True)
class BtsConfig:
    direction: Direction = Direction.BIDIRECTIONAL
    residual: bool = False
    attention_order: AttentionOrder = AttentionOrder.SA_THEN_CA

    def __post_init__(self):
        # accept plain strings from config files
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "attention_order", AttentionOrder(self.attention_order))
        object.__setattr__(self, "residual", bool(self.residual))

    def to_dict(self):
        return {
            "direction": self.direction.value,
            "residual": self.residual,
            "attention_order": self.attention_order.value,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**(d or {}))


class BtsOutput(NamedTuple):
    f_r: torch.Tensor
    f_d: torch.Tensor


def transfer_maps(bf_r, bf_d, sa_r, sa_d, direction: Direction):
    """Apply (possibly cross-modal) spatial attention maps to both branches.

    Receiving branch: ``cf_d = (SA_r + SA_r * SA_d) * bf_d`` (mirrored for RGB).
    A branch that receives nothing keeps its own attention: ``cf = SA * bf``.
    """
    direction = Direction(direction)
    into_d = direction in (Direction.R_TO_D, Direction.BIDIRECTIONAL)
    into_r = direction in (Direction.D_TO_R, Direction.BIDIRECTIONAL)
    cf_d = (sa_r + sa_r * sa_d) * bf_d if into_d else sa_d * bf_d
    cf_r = (sa_d + sa_d * sa_r) * bf_r if into_r else sa_r * bf_r
    return cf_r, cf_d


class BTS(nn.Module):
    """One BTS block for a hierarchy with ``channels`` feature channels."""

    def __init__(self, channels: int, cfg: BtsConfig = BtsConfig()):
        super().__init__()
        self.cfg = cfg
        self.channels = channels
        self.sa_r = SpatialAttention(channels)
        self.sa_d = SpatialAttention(channels)
        if cfg.attention_order is not AttentionOrder.SA_ONLY:
            # one independent channel selector per branch
            self.ca_r = ChannelSelect(channels)
            self.ca_d = ChannelSelect(channels)

    def _check(self, bf_r, bf_d):
        if bf_r.shape != bf_d.shape:
            raise ConfigurationError(
                f"BTS branches disagree in shape: rgb {tuple(bf_r.shape)} vs depth {tuple(bf_d.shape)}"
            )
        if bf_r.shape[1] != self.channels:
            raise ConfigurationError(
                f"BTS built for {self.channels} channels, got {bf_r.shape[1]}"
            )

    def transfer(self, bf_r, bf_d):
        self._check(bf_r, bf_d)
        return transfer_maps(bf_r, bf_d, self.sa_r(bf_r), self.sa_d(bf_d), self.cfg.direction)

    def forward(self, bf_r, bf_d) -> BtsOutput:
        self._check(bf_r, bf_d)
        order = self.cfg.attention_order
        if order is AttentionOrder.CA_THEN_SA:
            _, g_r = self.ca_r(bf_r)
            _, g_d = self.ca_d(bf_d)
            f_r, f_d = self.transfer(g_r, g_d)
        else:
            f_r, f_d = self.transfer(bf_r, bf_d)
            if order is AttentionOrder.SA_THEN_CA:
                _, f_r = self.ca_r(f_r)
                _, f_d = self.ca_d(f_d)
        if self.cfg.residual:
            f_r = f_r + bf_r
            f_d = f_d + bf_d
        return BtsOutput(f_r, f_d)
