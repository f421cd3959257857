"""Full network: dual encoder + group decoder (or the U-net variant)."""

from typing import Dict, Optional

import torch.nn as nn

from .bts import BtsConfig
from .core_ops import ConfigurationError, count_parameters, init_weights
from .decoder import DecoderOutput, GroupDecoder, UNetDecoder
from .encoder import BackboneConfig, DualEncoder

DECODERS = ("group", "unet")


class BTSNet(nn.Module):
    """RGB-D saliency network returning ``(S_c, S_r, S_d)``.

    With ``decoder="unet"`` the fused map ``S_c`` comes from a U-net over
    concatenated RGB/depth features while ``S_r``/``S_d`` still come from the
    per-branch heads, so three-way supervision is kept.
    """

    def __init__(
        self,
        backbone_cfg: BackboneConfig = BackboneConfig(),
        bts_cfg: Optional[BtsConfig] = BtsConfig(),
        decoder: str = "group",
    ):
        super().__init__()
        if decoder not in DECODERS:
            raise ConfigurationError(f"decoder must be one of {DECODERS}, got {decoder!r}")
        self.backbone_cfg = backbone_cfg
        self.bts_cfg = bts_cfg
        self.decoder_kind = decoder
        k = backbone_cfg.decoder_channels
        self.encoder = DualEncoder(backbone_cfg, bts_cfg)
        self.decoder = GroupDecoder(backbone_cfg.pyramid_channels(), k)
        self.unet = UNetDecoder(k) if decoder == "unet" else None
        if self.unet is not None:
            # the group fusion path is unused in this variant
            del self.decoder.fuse_h, self.decoder.fuse_l, self.decoder.head_c
        init_weights(self)

    def forward(self, rgb, depth) -> DecoderOutput:
        size = tuple(rgb.shape[-2:])
        pyr_r, pyr_d = self.encoder(rgb, depth)
        return self.decode(pyr_r, pyr_d, size)

    def decode(self, pyr_r, pyr_d, size) -> DecoderOutput:
        dec = self.decoder
        if self.unet is None:
            return dec(pyr_r, pyr_d, size)
        u_r, u_d = dec.unify(pyr_r, "r"), dec.unify(pyr_d, "d")
        f_r_h, f_r_l = dec.group(u_r)
        f_d_h, f_d_l = dec.group(u_d)
        return DecoderOutput(
            self.unet(u_r, u_d, size),
            dec.branch_predict(f_r_h, f_r_l, "r", size),
            dec.branch_predict(f_d_h, f_d_l, "d", size),
        )

    def parameter_breakdown(self) -> Dict[str, int]:
        out = {"encoder": count_parameters(self.encoder)}
        if self.encoder.bts is not None:
            out["bts"] = count_parameters(self.encoder.bts)
        out["unify"] = count_parameters(nn.ModuleList([self.decoder.unify_r, self.decoder.unify_d]))
        if self.unet is None:
            out["GD-C"] = sum(count_parameters(m) for m in self.decoder.components()["GD-C"])
        else:
            out["U-net"] = count_parameters(self.unet)
        out["GD-R"] = count_parameters(self.decoder.head_r)
        out["GD-D"] = count_parameters(self.decoder.head_d)
        out["total"] = count_parameters(self)
        return out
