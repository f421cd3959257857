"""Saliency evaluation: S-measure, max F-measure, max E-measure and MAE.

Conventions (all per image):

* ground truth is binarised at 0.5 (at 127 for 8-bit files);
* the F/E threshold sweeps min-max normalise the prediction first and then
  binarise ``s > t`` for the 256 thresholds ``t = k/255, k = 0..255``;
* S-measure and MAE use the prediction as given;
* ``beta^2 = 0.3`` for the F-measure and ``alpha = 0.5`` for the S-measure.

Dataset scores are arithmetic means of per-image scores.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

BETA2 = 0.3
ALPHA = 0.5
N_THRESHOLDS = 256
THRESHOLDS = np.arange(N_THRESHOLDS, dtype=np.float64) / 255.0
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def _as_2d(a) -> np.ndarray:
    if hasattr(a, "detach"):
        a = a.detach().cpu().numpy()
    a = np.asarray(a, dtype=np.float64)
    while a.ndim > 2 and a.shape[0] == 1:
        a = a[0]
    if a.ndim != 2:
        raise ValueError(f"expected a single 2-D map, got shape {a.shape}")
    return a


def _prepare(s, g):
    s, g = _as_2d(s), _as_2d(g)
    if s.shape != g.shape:
        raise ValueError(f"prediction {s.shape} and ground truth {g.shape} differ in shape")
    return s, g > 0.5


def normalize_prediction(s: np.ndarray) -> np.ndarray:
    """Min-max normalise to [0, 1]; constant maps are returned clipped."""
    lo, hi = s.min(), s.max()
    if hi > lo:
        return (s - lo) / (hi - lo)
    return np.clip(s, 0.0, 1.0)


def mae(s, g) -> float:
    s, g = _prepare(s, g)
    return float(np.mean(np.abs(s - g)))


def threshold_counts(s, g):
    """Per-threshold ``(TP, FP, FN, TN)`` arrays of length 256."""
    s, g = _prepare(s, g)
    s = normalize_prediction(s)
    # pixel is positive at threshold k iff it exceeds k of the thresholds
    above = np.searchsorted(THRESHOLDS, s, side="left")
    fg_hist = np.bincount(above[g], minlength=N_THRESHOLDS + 1)
    bg_hist = np.bincount(above[~g], minlength=N_THRESHOLDS + 1)
    # positives at threshold k: pixels with above > k
    tp = np.cumsum(fg_hist[::-1])[::-1][1:]
    fp = np.cumsum(bg_hist[::-1])[::-1][1:]
    n_fg, n_bg = int(g.sum()), int((~g).sum())
    return tp, fp, n_fg - tp, n_bg - fp


def f_measure_curve(s, g, beta2: float = BETA2) -> np.ndarray:
    tp, fp, fn, _ = (c.astype(np.float64) for c in threshold_counts(s, g))
    precision = np.divide(tp, tp + fp, out=np.zeros_like(tp), where=(tp + fp) > 0)
    recall = np.divide(tp, tp + fn, out=np.zeros_like(tp), where=(tp + fn) > 0)
    denom = beta2 * precision + recall
    f = np.divide((1 + beta2) * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    # empty mask and empty prediction agree perfectly
    f[(tp + fp + fn) == 0] = 1.0
    return f


def f_measure_max(s, g, beta2: float = BETA2) -> float:
    return float(f_measure_curve(s, g, beta2).max())


def e_measure_curve(s, g) -> np.ndarray:
    tp, fp, fn, tn = (c.astype(np.float64) for c in threshold_counts(s, g))
    n = tp[0] + fp[0] + fn[0] + tn[0]
    n_fg = tp[0] + fn[0]
    if n_fg == 0:
        return (fn + tn) / n  # 1 - mean(binarised)
    if n_fg == n:
        return (tp + fp) / n  # mean(binarised)
    mu_g = n_fg / n
    mu_s = (tp + fp) / n

    def enhanced(b, gv):
        phi_s, phi_g = b - mu_s, gv - mu_g
        denom = phi_g ** 2 + phi_s ** 2
        # both deviations vanish only together; that pixel carries no alignment
        xi = np.divide(2.0 * phi_g * phi_s, denom, out=np.zeros_like(denom), where=denom > 0)
        return (1.0 + xi) ** 2 / 4.0

    total = (
        tp * enhanced(1.0, 1.0)
        + fp * enhanced(1.0, 0.0)
        + fn * enhanced(0.0, 1.0)
        + tn * enhanced(0.0, 0.0)
    )
    return total / n


def e_measure_max(s, g) -> float:
    return float(e_measure_curve(s, g).max())


def _object_score(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma)


def _s_object(s, g) -> float:
    # area-weighted sum in exact arithmetic, so a perfect match scores exactly 1
    n_fg = int(g.sum())
    parts = [n_fg * _object_score(s[g]), (g.size - n_fg) * _object_score(1.0 - s[~g])]
    return math.fsum(parts) / g.size


def _ssim(p: np.ndarray, q: np.ndarray) -> float:
    n = p.size
    if n == 0:
        return 0.0
    x, y = p.mean(), q.mean()
    dof = max(n - 1, 1)
    sx = ((p - x) ** 2).sum() / dof
    sy = ((q - y) ** 2).sum() / dof
    sxy = ((p - x) * (q - y)).sum() / dof
    alpha = 4 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        # alpha != 0 forces both variances and hence beta to be positive
        return alpha / beta
    return 1.0 if beta == 0 else 0.0


def centroid_split(g: np.ndarray):
    """1-based centroid ``(X, Y)`` of the mask, rounded half away from zero."""
    h, w = g.shape
    rows, cols = np.nonzero(g)
    if rows.size == 0:
        return int(np.floor(w / 2 + 0.5)), int(np.floor(h / 2 + 0.5))
    return int(np.floor(cols.mean() + 1.5)), int(np.floor(rows.mean() + 1.5))


def _s_region(s, g) -> float:
    x, y = centroid_split(g)
    gf = g.astype(np.float64)
    quads = [np.s_[:y, :x], np.s_[:y, x:], np.s_[y:, :x], np.s_[y:, x:]]
    # quadrant weights are area fractions
    return math.fsum(gf[sl].size * _ssim(s[sl], gf[sl]) for sl in quads) / g.size


def s_measure(s, g, alpha: float = ALPHA) -> float:
    s, g = _prepare(s, g)
    y = g.mean()
    if y == 0:
        score = 1.0 - s.mean()
    elif y == 1:
        score = s.mean()
    else:
        score = alpha * _s_object(s, g) + (1 - alpha) * _s_region(s, g)
    return float(min(max(score, 0.0), 1.0))


def evaluate_pair(s, g) -> Dict[str, float]:
    return {
        "s_alpha": s_measure(s, g),
        "f_beta_max": f_measure_max(s, g),
        "e_xi_max": e_measure_max(s, g),
        "mae": mae(s, g),
    }


@dataclass
class MetricsReport:
    s_alpha: float
    f_beta_max: float
    e_xi_max: float
    mae: float
    n_images: int = 0
    per_image: Optional[List[dict]] = None
    errors: List[str] = field(default_factory=list)

    @classmethod
    def from_per_image(cls, per_image: List[dict], errors=None):
        if not per_image:
            nan = float("nan")
            return cls(nan, nan, nan, nan, 0, [], list(errors or []))
        keys = ("s_alpha", "f_beta_max", "e_xi_max", "mae")
        means = {k: float(np.mean([r[k] for r in per_image])) for k in keys}
        return cls(**means, n_images=len(per_image), per_image=per_image, errors=list(errors or []))

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self):
        return asdict(self)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def format_table(self, name: str = "dataset") -> str:
        return format_table({name: self})


def format_table(reports: Dict[str, "MetricsReport"]) -> str:
    """Aligned text table with one row per dataset/setting."""
    header = ["", "S_alpha↑", "F_beta^max↑", "E_xi^max↑", "M↓"]
    rows = [
        [name, f"{r.s_alpha:.3f}", f"{r.f_beta_max:.3f}", f"{r.e_xi_max:.3f}", f"{r.mae:.3f}"]
        for name, r in reports.items()
    ]
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in [header] + rows]
    return "\n".join(lines)


def _index_dir(path: Path) -> Dict[str, Path]:
    return {p.stem: p for p in sorted(path.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def read_gray(path, size=None) -> np.ndarray:
    img = Image.open(path).convert("L")
    if size is not None and img.size != size:
        img = img.resize(size, Image.BILINEAR)
    return np.asarray(img, dtype=np.float64) / 255.0


def evaluate_dataset(pred_dir, gt_dir, keep_per_image: bool = True) -> MetricsReport:
    """Score every prediction against the ground truth with the same stem.

    Missing counterparts and unreadable files are itemised in
    ``report.errors``; the remaining pairs are still evaluated.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    preds, gts = _index_dir(pred_dir), _index_dir(gt_dir)
    errors = [f"{stem}: no prediction in {pred_dir}" for stem in sorted(gts.keys() - preds.keys())]
    errors += [f"{stem}: no ground truth in {gt_dir}" for stem in sorted(preds.keys() - gts.keys())]
    per_image = []
    for stem in sorted(preds.keys() & gts.keys()):
        try:
            gt_img = Image.open(gts[stem]).convert("L")
            g = np.asarray(gt_img, dtype=np.float64) > 127
            s = read_gray(preds[stem], size=gt_img.size)
        except OSError as exc:
            errors.append(f"{stem}: unreadable ({exc})")
            continue
        per_image.append({"stem": stem, **evaluate_pair(s, g)})
    for e in errors:
        log.warning(e)
    report = MetricsReport.from_per_image(per_image, errors)
    if not keep_per_image:
        report.per_image = None
    return report
