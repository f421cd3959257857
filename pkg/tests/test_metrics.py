"""Metric implementations checked against loop transcriptions of the reference definitions."""


import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from oracles import counts_loop, e_reference, f_loop, mae_loop, random_pairs, s_reference

from btsnet.metrics import (
    centroid_split,
    e_measure_curve,
    e_measure_max,
    evaluate_dataset,
    evaluate_pair,
    f_measure_curve,
    f_measure_max,
    mae,
    s_measure,
    threshold_counts,
)

PAIRS = random_pairs()


# --- oracle equivalence --------------------------------------------------


def test_mae_matches_loop():
    for s, g in PAIRS:
        assert abs(mae(s, g) - mae_loop(s, g.astype(float))) < 1e-9


def test_threshold_counts_match_loop():
    for s, g in PAIRS:
        got = np.stack(threshold_counts(s, g), axis=1)
        np.testing.assert_array_equal(got, counts_loop(s, g))


def test_f_curve_matches_loop():
    for s, g in PAIRS:
        np.testing.assert_allclose(f_measure_curve(s, g), f_loop(s, g), rtol=0, atol=1e-9)


def test_e_curve_matches_reference():
    for s, g in PAIRS:
        np.testing.assert_allclose(e_measure_curve(s, g), e_reference(s, g), rtol=0, atol=1e-6)


def test_s_measure_matches_reference():
    for s, g in PAIRS:
        assert abs(s_measure(s, g) - s_reference(s, g)) < 1e-6


def test_centroid_rounds_half_away_from_zero():
    g = np.zeros((4, 4), bool)
    g[0, 0] = g[0, 1] = True  # column mean 1.5 (1-based) -> 2
    assert centroid_split(g) == (2, 1)
    g = np.zeros((5, 5), bool)
    assert centroid_split(g) == (3, 3)


# --- anchors -------------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(h=st.integers(1, 16), w=st.integers(1, 16), p=st.floats(0, 1), seed=st.integers(0, 2**16))
def test_perfect_prediction_scores_exactly(h, w, p, seed):
    g = (np.random.default_rng(seed).random((h, w)) < p).astype(float)
    assert evaluate_pair(g, g) == {"s_alpha": 1.0, "f_beta_max": 1.0, "e_xi_max": 1.0, "mae": 0.0}


def test_half_prediction_on_empty_mask():
    assert mae(np.full((8, 8), 0.5), np.zeros((8, 8))) == 0.5


def test_inverted_prediction():
    g = np.zeros((8, 8))
    g[2:6, 1:5] = 1
    assert f_measure_max(1 - g, g) == 0.0
    # any constant binarisation scores exactly 1/4; the inverted map cannot do better
    assert e_measure_max(1 - g, g) == pytest.approx(0.25, abs=1e-15)
    assert s_measure(1 - g, g) < 0.1


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**16), scale=st.floats(0.1, 10), shift=st.floats(-5, 5))
def test_threshold_metrics_invariant_to_affine_rescaling(seed, scale, shift):
    # continuous scores, so no value sits exactly on a threshold
    rng = np.random.default_rng(seed)
    s, g = rng.random((8, 8)), rng.random((8, 8)) > 0.5
    a, b = f_measure_curve(s, g), f_measure_curve(s * scale + shift, g)
    np.testing.assert_allclose(a.max(), b.max(), atol=1e-12)
    np.testing.assert_allclose(e_measure_max(s, g), e_measure_max(s * scale + shift, g), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_ranges(seed):
    rng = np.random.default_rng(seed)
    s, g = rng.random((6, 9)), rng.random((6, 9)) > 0.5
    for v in evaluate_pair(s, g).values():
        assert 0.0 <= v <= 1.0


def test_shape_mismatch():
    with pytest.raises(ValueError):
        mae(np.zeros((4, 4)), np.zeros((4, 5)))


# --- dataset evaluation --------------------------------------------------


def _png(a, path):
    Image.fromarray((np.asarray(a) * 255).round().astype(np.uint8)).save(path)


def test_evaluate_dataset(tmp_path):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    for i, (s, g) in enumerate(PAIRS[:3]):
        _png(g.astype(float), gt / f"im{i}.png")
        _png(g.astype(float), pred / f"im{i}.png")
    _png(PAIRS[4][1].astype(float), gt / "only_gt.png")
    (pred / "broken.png").write_bytes(b"not an image")
    _png(PAIRS[4][1].astype(float), gt / "broken.png")
    report = evaluate_dataset(pred, gt)
    assert report.n_images == 3
    assert (report.s_alpha, report.f_beta_max, report.e_xi_max, report.mae) == (1.0, 1.0, 1.0, 0.0)
    assert not report.ok
    assert any("only_gt" in e for e in report.errors)
    assert any("broken" in e for e in report.errors)
    report.save(tmp_path / "r.json")
    assert "S_alpha" in report.format_table("x")


def test_mae_symmetric_under_complement():
    for s, g in PAIRS[:20]:
        assert mae(s, g) == pytest.approx(mae(1 - s, 1 - g.astype(float)), abs=1e-15)


def test_empty_mask_and_empty_prediction():
    z = np.zeros((6, 6))
    assert s_measure(z, z) == 1.0 and f_measure_max(z, z) == 1.0 and e_measure_max(z, z) == 1.0


def test_fixed_16x16_fixture():
    yy, xx = np.mgrid[0:16, 0:16]
    g = (yy - 7.5) ** 2 + (xx - 6) ** 2 < 20
    s = np.clip(0.8 * g + 0.05 * np.sin(xx * 0.7) + 0.1 * np.cos(yy * 0.3) + 0.05, 0, 1)
    assert abs(s_measure(s, g) - s_reference(s, g)) < 1e-6
    np.testing.assert_allclose(e_measure_curve(s, g), e_reference(s, g), atol=1e-6)
    sq = np.zeros((16, 16))
    sq[4:12, 4:12] = 1
    assert abs(s_measure(sq, sq) - 1.0) < 1e-6


def test_dataset_mean_by_hand(tmp_path):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    g = np.zeros((4, 4))
    g[:2] = 1
    _png(g, gt / "a.png")
    _png(g, pred / "a.png")  # MAE 0
    _png(g, gt / "b.png")
    _png(np.full((4, 4), 0.2), pred / "b.png")  # MAE (8*0.8 + 8*0.2) / 16 = 0.5
    report = evaluate_dataset(pred, gt)
    assert report.mae == pytest.approx(0.25, abs=1e-2 / 255 + 1e-12)


def test_one_missing_in_ten(tmp_path):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    for i, (s, g) in enumerate(PAIRS[:10]):
        _png(g.astype(float), gt / f"{i}.png")
        if i != 4:
            _png(s, pred / f"{i}.png")
    report = evaluate_dataset(pred, gt)
    assert report.n_images == 9 and report.errors == [f"4: no prediction in {pred}"]
