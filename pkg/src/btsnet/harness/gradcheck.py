"""Central finite-difference verification of autograd gradients."""

from typing import Callable, List, Sequence

import torch

from ..bts import BTS, AttentionOrder, BtsConfig, Direction
from ..core_ops import ASPP, BConv, ChannelSelect, PredictionHead, SpatialAttention, init_weights
from ..encoder import BackboneConfig
from ..loss import total_loss
from ..model import BTSNet

COMPONENTS = ("bconv", "spatial_attention", "channel_select", "aspp", "prediction_head", "bts", "loss", "network")

# gradient entries smaller than this are compared absolutely
ABS_FLOOR = 1e-6


def finite_difference_error(
    fn: Callable[[], torch.Tensor],
    tensors: Sequence[torch.Tensor],
    eps: float = 1e-6,
    samples_per_tensor: int = 8,
    seed: int = 0,
) -> float:
    """Worst relative error between autograd and central differences.

    ``fn`` maps the current values of ``tensors`` (leaf tensors with
    ``requires_grad``) to a scalar. Up to ``samples_per_tensor`` coordinates
    of each tensor are probed; the error of one coordinate is
    ``|a - n| / max(|a|, |n|, ABS_FLOOR)``.
    """
    gen = torch.Generator().manual_seed(seed)
    analytic = torch.autograd.grad(fn(), list(tensors), allow_unused=True)
    worst = 0.0
    with torch.no_grad():
        for t, g in zip(tensors, analytic):
            if g is None:
                g = torch.zeros_like(t)
            flat, gflat = t.view(-1), g.reshape(-1)
            n = min(samples_per_tensor, flat.numel())
            for i in torch.randperm(flat.numel(), generator=gen)[:n].tolist():
                orig = flat[i].item()
                flat[i] = orig + eps
                f_plus = fn().item()
                flat[i] = orig - eps
                f_minus = fn().item()
                flat[i] = orig
                num = (f_plus - f_minus) / (2 * eps)
                ana = gflat[i].item()
                err = abs(ana - num) / max(abs(ana), abs(num), ABS_FLOOR)
                worst = max(worst, err)
    return worst


def _projected(module_fn, gen, dtype):
    """Scalar objective ``sum(out * R)`` for a fixed random ``R``."""
    weights = {}

    def fn():
        out = module_fn()
        outs = out if isinstance(out, (tuple, list)) else (out,)
        total = 0.0
        for j, o in enumerate(outs):
            if j not in weights:
                weights[j] = torch.randn(o.shape, generator=gen, dtype=dtype)
            total = total + (o * weights[j]).sum()
        return total

    return fn


def _module_check(module, inputs, eps, samples, seed, dtype):
    gen = torch.Generator().manual_seed(seed + 1)
    module = module.to(dtype)
    init_weights(module)
    with torch.no_grad():
        # non-zero biases / BN shifts so every parameter is exercised
        for p in module.parameters():
            p.add_(0.1 * torch.randn(p.shape, generator=gen, dtype=dtype))
    module.train()
    inputs = [x.to(dtype).requires_grad_(True) for x in inputs]
    fn = _projected(lambda: module(*inputs), gen, dtype)
    params: List[torch.Tensor] = [p for p in module.parameters()]
    return finite_difference_error(fn, inputs + params, eps, samples, seed)


def check_component(component: str, eps: float = 1e-6, dtype=torch.float64, samples: int = 8,
                    seed: int = 0, bts_cfg: BtsConfig = BtsConfig()) -> float:
    """Max relative finite-difference error for one TINY-sized component."""
    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    rand = lambda *s: torch.randn(*s, generator=gen, dtype=dtype)  # noqa: E731

    if component == "bconv":
        return _module_check(BConv(4, 3, 3), [rand(2, 4, 6, 6)], eps, samples, seed, dtype)
    if component == "spatial_attention":
        return _module_check(SpatialAttention(4), [rand(1, 4, 6, 6)], eps, samples, seed, dtype)
    if component == "channel_select":
        return _module_check(ChannelSelect(4), [rand(1, 4, 6, 6)], eps, samples, seed, dtype)
    if component == "aspp":
        return _module_check(ASPP(4, 4, (1, 2, 3), 3), [rand(2, 4, 6, 6)], eps, samples, seed, dtype)
    if component == "prediction_head":
        head = PredictionHead(4, 3)
        return _module_check(_WithSize(head, (12, 12)), [rand(2, 4, 6, 6)], eps, samples, seed, dtype)
    if component == "bts":
        return _module_check(BTS(4, bts_cfg), [rand(1, 4, 6, 6), rand(1, 4, 6, 6)], eps, samples, seed, dtype)
    if component == "loss":
        logits = [rand(2, 1, 4, 4).requires_grad_(True) for _ in range(3)]
        g = (torch.rand(2, 1, 4, 4, generator=gen) > 0.5).to(dtype)
        fn = lambda: total_loss([torch.sigmoid(z) for z in logits], g)  # noqa: E731
        return finite_difference_error(fn, logits, eps, samples, seed)
    if component == "network":
        return check_network(eps=eps, dtype=dtype, samples=samples, seed=seed, bts_cfg=bts_cfg)
    raise ValueError(f"unknown component {component!r}; choose from {COMPONENTS}")


class _WithSize(torch.nn.Module):
    def __init__(self, head, size):
        super().__init__()
        self.head, self.size = head, size

    def forward(self, x):
        return self.head(x, self.size)


def check_network(eps=1e-6, dtype=torch.float64, samples=4, seed=0, size=16, bts_cfg=BtsConfig(),
                  decoder="group") -> float:
    """TINY encoder + decoder + loss on a ``size`` x ``size`` batch of two."""
    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    model = BTSNet(BackboneConfig.tiny((size, size)), bts_cfg, decoder).to(dtype)
    model.train()
    rgb = torch.randn(2, 3, size, size, generator=gen, dtype=dtype).requires_grad_(True)
    depth = (0.1 + 0.8 * torch.rand(2, 1, size, size, generator=gen, dtype=dtype)).requires_grad_(True)
    g = (torch.rand(2, 1, size, size, generator=gen) > 0.5).to(dtype)
    fn = lambda: total_loss(model(rgb, depth), g)  # noqa: E731
    params = [p for p in model.parameters()]
    return finite_difference_error(fn, [rgb, depth] + params, eps, samples, seed)


def all_bts_configs():
    for d in Direction:
        for res in (False, True):
            for order in AttentionOrder:
                yield BtsConfig(d, res, order)
