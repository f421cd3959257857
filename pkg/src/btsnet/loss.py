"""Three-way binary cross-entropy supervision."""

from dataclasses import dataclass

import torch

EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lambda_c: float = 1.0
    lambda_r: float = 0.5
    lambda_d: float = 0.5

    def __post_init__(self):
        for name in ("lambda_c", "lambda_r", "lambda_d"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def to_dict(self):
        return {"lambda_c": self.lambda_c, "lambda_r": self.lambda_r, "lambda_d": self.lambda_d}


def bce(s: torch.Tensor, g: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    """Pixel-mean binary cross-entropy of probabilities ``s`` against mask ``g``.

    ``s`` is clamped to ``[eps, 1 - eps]`` so saturated sigmoids stay finite.
    """
    if s.shape != g.shape:
        raise ValueError(f"prediction {tuple(s.shape)} and mask {tuple(g.shape)} differ in shape")
    s = s.clamp(eps, 1.0 - eps)
    return -(g * torch.log(s) + (1.0 - g) * torch.log1p(-s)).mean()


def total_loss(out, g: torch.Tensor, w: LossWeights = LossWeights()) -> torch.Tensor:
    """``lambda_c*bce(S_c) + lambda_r*bce(S_r) + lambda_d*bce(S_d)``."""
    s_c, s_r, s_d = out
    return w.lambda_c * bce(s_c, g) + w.lambda_r * bce(s_r, g) + w.lambda_d * bce(s_d, g)
