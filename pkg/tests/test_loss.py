import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from btsnet.loss import LossWeights, bce, total_loss


def bce_loop(s, g, eps=1e-7):
    total = 0.0
    flat_s, flat_g = s.reshape(-1).tolist(), g.reshape(-1).tolist()
    for p, y in zip(flat_s, flat_g):
        p = min(max(p, eps), 1 - eps)
        total -= y * math.log(p) + (1 - y) * math.log(1 - p)
    return total / len(flat_s)


def test_uniform_half_is_ln2():
    g = (torch.rand(2, 1, 8, 8) > 0.5).double()
    assert bce(torch.full_like(g, 0.5), g).item() == pytest.approx(math.log(2), abs=1e-12)


def test_total_loss_anchor():
    g = torch.zeros(2, 1, 8, 8)
    half = torch.full_like(g, 0.5)
    value = total_loss((half, half, half), g).item()
    assert abs(value - 1.386294) < 1e-6
    assert value == pytest.approx(2 * math.log(2), abs=1e-12)


def test_saturated_predictions_stay_finite():
    g = torch.tensor([[0.0, 1.0]])
    s = torch.tensor([[1.0, 0.0]])
    value = bce(s, g).item()
    assert math.isfinite(value)
    assert value == pytest.approx(-math.log(1e-7), rel=1e-6)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 40))
def test_matches_loop_oracle(seed, n):
    rng = np.random.default_rng(seed)
    s = rng.random(n)
    s[rng.random(n) < 0.1] = 0.0
    g = (rng.random(n) > 0.5).astype(float)
    got = bce(torch.tensor(s), torch.tensor(g)).item()
    assert got == pytest.approx(bce_loop(s, g), rel=1e-12, abs=1e-14)


def test_weights_applied():
    g = (torch.rand(1, 1, 4, 4) > 0.5).double()
    s = [torch.rand(1, 1, 4, 4) for _ in range(3)]
    w = LossWeights(2.0, 0.25, 0.0)
    exp = 2.0 * bce(s[0], g) + 0.25 * bce(s[1], g)
    assert total_loss(s, g, w).item() == pytest.approx(exp.item(), abs=1e-14)


def test_negative_weight_rejected():
    with pytest.raises(ValueError):
        LossWeights(lambda_r=-1)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        bce(torch.zeros(1, 1, 4, 4), torch.zeros(1, 1, 4, 5))


def test_perfect_prediction_bounded_by_clamp():
    g = (torch.rand(1, 1, 8, 8) > 0.5).double()
    assert 0 <= bce(g.clone(), g).item() <= -math.log(1 - 1e-7) + 1e-15
