"""Ablation runner for interaction directions, attention order and decoder type."""

import json
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import List, Optional

from ..bts import AttentionOrder, BtsConfig, Direction
from ..core_ops import count_parameters
from ..encoder import Scale
from ..metrics import MetricsReport, evaluate_pair
from .audit import count_components
from .config import TrainConfig
from .train import predict, resolve_samples, train

log = logging.getLogger(__name__)

SUITES = ("directions", "attention_order", "decoder")

DIRECTION_ROWS = [
    ("1", "None", False, Direction.NONE),
    ("2", "R←D", False, Direction.D_TO_R),
    ("3", "R→D", False, Direction.R_TO_D),
    ("4", "R↔D", False, Direction.BIDIRECTIONAL),
    ("5", "R↔D", True, Direction.BIDIRECTIONAL),
]
ATTENTION_ROWS = [
    ("Only SA", AttentionOrder.SA_ONLY),
    ("CA-SA", AttentionOrder.CA_THEN_SA),
    ("SA-CA", AttentionOrder.SA_THEN_CA),
]
DECODER_ROWS = [
    ("U-net", "unet", 0),
    ("GD-D", "group", 2),
    ("GD-R", "group", 1),
    ("GD-C", "group", 0),
]


def variant_labels(suite: str) -> List[str]:
    if suite == "directions":
        return [f"{d}{'+Res' if res else ''}" for _, d, res, _ in DIRECTION_ROWS]
    if suite == "attention_order":
        return [label for label, _ in ATTENTION_ROWS]
    if suite == "decoder":
        return [label for label, _, _ in DECODER_ROWS]
    raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")


@dataclass
class AblationReport:
    suite: str
    rows: List[dict]

    @property
    def labels(self):
        return [r["label"] for r in self.rows]

    def table(self) -> str:
        cols = ["label", "S_alpha", "F_beta_max", "E_xi_max", "MAE", "train_loss"]
        if self.suite == "directions":
            cols = ["#", "Direction", "Res"] + cols[1:]
        if self.suite == "decoder":
            cols = ["label", "params", "params (full)"] + cols[1:]
        body = [[_cell(r.get(c)) for c in cols] for r in self.rows]
        widths = [max(len(x[i]) for x in [cols] + body) for i in range(len(cols))]
        return "\n".join(
            "  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in [cols] + body
        )

    def save(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"ablation_{self.suite}.json").write_text(
            json.dumps({"suite": self.suite, "rows": self.rows}, indent=2, ensure_ascii=False)
        )
        (out_dir / f"ablation_{self.suite}.txt").write_text(self.table() + "\n", encoding="utf-8")
        return out_dir


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "✓" if v else ""
    if isinstance(v, float):
        return f"{v:.3f}"
    if isinstance(v, int) and v >= 10_000:
        return f"{v / 1e6:.2f}M"
    return str(v)


def _evaluate(ckpt, samples, output_index=0) -> MetricsReport:
    model = ckpt.build_model()
    size = ckpt.config.backbone_config().input_size
    per_image = []
    for s in samples:
        maps = predict(model, s, size)
        per_image.append({"stem": s.stem, **evaluate_pair(maps[output_index], s.gt[0])})
    return MetricsReport.from_per_image(per_image)


def _metric_cols(report: MetricsReport, ckpt):
    return {
        "train_loss": ckpt.history[-1],
        "S_alpha": report.s_alpha,
        "F_beta_max": report.f_beta_max,
        "E_xi_max": report.e_xi_max,
        "MAE": report.mae,
    }


@lru_cache(maxsize=None)
def _full_scale_counts():
    return count_components(Scale.FULL)


def run_ablation(
    suite: str,
    base_cfg: TrainConfig,
    train_data,
    eval_data=None,
    out_dir=None,
    max_steps: Optional[int] = None,
) -> AblationReport:
    """Train and evaluate every variant of ``suite`` under ``base_cfg``'s seed.

    ``eval_data`` defaults to the training data.
    """
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
    train_samples = resolve_samples(train_data)
    eval_samples = resolve_samples(eval_data) if eval_data is not None else train_samples
    rows = []

    def run(cfg, tag):
        sub = Path(out_dir) / suite / tag if out_dir else None
        log.info("ablation %s: training %s", suite, tag)
        return train(cfg, train_samples, out_dir=sub, max_steps=max_steps)

    if suite == "directions":
        for num, label, res, direction in DIRECTION_ROWS:
            bts = BtsConfig(direction, res, base_cfg.bts.attention_order)
            ckpt = run(base_cfg.replace(bts=bts), f"{num}_{direction.value}{'_res' if res else ''}")
            rows.append({"#": num, "Direction": label, "Res": res,
                         "label": f"{label}{'+Res' if res else ''}",
                         "config": bts.to_dict(), **_metric_cols(_evaluate(ckpt, eval_samples), ckpt)})
    elif suite == "attention_order":
        for label, order in ATTENTION_ROWS:
            bts = BtsConfig(base_cfg.bts.direction, False, order)
            ckpt = run(base_cfg.replace(bts=bts), order.value)
            rows.append({"label": label, "config": bts.to_dict(),
                         **_metric_cols(_evaluate(ckpt, eval_samples), ckpt)})
    else:
        full = _full_scale_counts()
        ckpts = {}
        for label, decoder, out_idx in DECODER_ROWS:
            if decoder not in ckpts:
                ckpts[decoder] = run(base_cfg.replace(decoder=decoder), decoder)
            ckpt = ckpts[decoder]
            model = ckpt.build_model()
            if decoder == "unet":
                params = count_parameters(model.unet)
            else:
                params = sum(count_parameters(m) for m in model.decoder.components()[label])
            rows.append({"label": label, "decoder": decoder, "params": params,
                         "params (full)": int(full[label]),
                         **_metric_cols(_evaluate(ckpt, eval_samples, out_idx), ckpt)})
    report = AblationReport(suite, rows)
    if out_dir:
        report.save(out_dir)
    return report

