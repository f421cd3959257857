"""Parameter audit of encoder and decoder components.

FULL-scale networks are built on the ``meta`` device, so no weights are
allocated and the audit finishes in seconds.
"""

from typing import Dict, List, Optional

import torch

from ..bts import BtsConfig
from ..core_ops import count_parameters
from ..decoder import GroupDecoder, UNetDecoder
from ..encoder import BackboneConfig, DualEncoder, Scale

# reference counts reported for the full-scale network
PAPER_COUNTS = {
    "encoder w/o BTS": 80.3e6,
    "encoder w/ BTS": 91.5e6,
    "BTS delta": 11.2e6,
    "GD-C": 4.1e6,
    "GD-R": 1.8e6,
    "GD-D": 1.8e6,
    "U-net": 32.4e6,
    "GD-C / U-net": 0.127,
}

# acceptance tolerances: relative for counts, absolute for the ratio; None = reported only
TOLERANCES = {
    "encoder w/o BTS": None,
    "encoder w/ BTS": None,
    "BTS delta": 0.05,
    "GD-C": 0.05,
    "GD-R": 0.05,
    "GD-D": 0.05,
    "U-net": 0.15,
    "GD-C / U-net": 0.03,
}

PARTS = ("encoder", "decoder")


def count_components(scale=Scale.FULL, backbone_cfg: Optional[BackboneConfig] = None) -> Dict[str, float]:
    cfg = backbone_cfg or BackboneConfig.for_scale(scale)
    device = "meta" if cfg.scale is Scale.FULL else "cpu"
    with torch.device(device):
        plain = DualEncoder(cfg, None)
        with_bts = DualEncoder(cfg, BtsConfig())
        group = GroupDecoder(cfg.pyramid_channels(), cfg.decoder_channels)
        unet = UNetDecoder(cfg.decoder_channels)
    comps = group.components()
    counts = {
        "encoder w/o BTS": count_parameters(plain),
        "encoder w/ BTS": count_parameters(with_bts),
        "BTS delta": count_parameters(with_bts) - count_parameters(plain),
        "GD-C": sum(count_parameters(m) for m in comps["GD-C"]),
        "GD-R": sum(count_parameters(m) for m in comps["GD-R"]),
        "GD-D": sum(count_parameters(m) for m in comps["GD-D"]),
        "unify": sum(count_parameters(m) for m in comps["unify"]),
        "U-net": count_parameters(unet),
    }
    counts["GD-C / U-net"] = counts["GD-C"] / counts["U-net"]
    return counts


def audit_params(scale=Scale.FULL, parts=PARTS) -> List[dict]:
    """One row per component: count, reference value, deviation and pass flag."""
    counts = count_components(Scale(scale))
    wanted = []
    if "encoder" in parts:
        wanted += ["encoder w/o BTS", "encoder w/ BTS", "BTS delta"]
    if "decoder" in parts:
        wanted += ["unify", "GD-C", "GD-R", "GD-D", "U-net", "GD-C / U-net"]
    full = Scale(scale) is Scale.FULL
    rows = []
    for name in wanted:
        value = counts[name]
        ref = PAPER_COUNTS.get(name) if full else None
        tol = TOLERANCES.get(name) if full else None
        row = {"component": name, "count": value, "reference": ref, "deviation": None, "ok": None}
        if ref is not None:
            dev = value - ref if name == "GD-C / U-net" else (value - ref) / ref
            row["deviation"] = dev
            if tol is not None:
                row["ok"] = abs(dev) <= tol
        rows.append(row)
    return rows


def format_audit(rows: List[dict]) -> str:
    def fmt_count(name, v):
        if v is None:
            return "-"
        if name == "GD-C / U-net":
            return f"{v:.3f}"
        return f"{v / 1e6:.2f}M" if v >= 1e6 else f"{int(v):,}"

    header = ["component", "count", "reference", "deviation", "check"]
    body = []
    for r in rows:
        dev = r["deviation"]
        if dev is None:
            dev_s = "-"
        elif r["component"] == "GD-C / U-net":
            dev_s = f"{dev:+.3f}"
        else:
            dev_s = f"{dev:+.1%}"
        check = {None: "", True: "ok", False: "FAIL"}[r["ok"]]
        body.append([r["component"], fmt_count(r["component"], r["count"]),
                     fmt_count(r["component"], r["reference"]), dev_s, check])
    widths = [max(len(x[i]) for x in [header] + body) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in [header] + body)
