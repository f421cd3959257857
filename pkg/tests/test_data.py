import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from btsnet.data import (
    DATA_ROOT_ENV,
    DatasetError,
    DatasetSpec,
    Sample,
    load_dataset,
    preprocess,
    synthetic_dataset,
    to_batch,
    write_dataset,
)


def check_sample(s: Sample, size=None):
    h, w = s.size if size is None else size
    assert s.rgb.shape == (3, h, w) and s.depth.shape == (1, h, w) and s.gt.shape == (1, h, w)
    assert s.rgb.dtype == s.depth.dtype == s.gt.dtype == np.float32
    assert set(np.unique(s.gt)) <= {0.0, 1.0}
    assert np.isfinite(s.rgb).all() and np.isfinite(s.depth).all()


def nju_layout(root, n=5, size=(480, 640), seed=0):
    """RGB jpg, 8-bit depth png and 0/255 GT png of the given (H, W)."""
    rng = np.random.default_rng(seed)
    h, w = size
    for d in ("RGB", "depth", "GT"):
        (root / d).mkdir(parents=True)
    for i in range(n):
        Image.fromarray(rng.integers(0, 256, (h, w, 3), dtype=np.uint8)).save(root / "RGB" / f"{i:03d}.jpg")
        Image.fromarray(rng.integers(0, 256, (h, w), dtype=np.uint8)).save(root / "depth" / f"{i:03d}.png")
        gt = np.zeros((h, w), np.uint8)
        gt[h // 4: h // 2, w // 3: w // 2] = 255
        Image.fromarray(gt).save(root / "GT" / f"{i:03d}.png")
    return root


class TestSynthetic:
    def test_bitwise_deterministic(self):
        a = synthetic_dataset(8, 7, (64, 64))
        b = synthetic_dataset(8, 7, (64, 64))
        for x, y in zip(a, b):
            for f in ("rgb", "depth", "gt"):
                assert np.array_equal(getattr(x, f), getattr(y, f))
            assert x.stem == y.stem

    def test_seed_changes_scenes(self):
        a, b = synthetic_dataset(2, 0), synthetic_dataset(2, 1)
        assert not np.array_equal(a[0].gt, b[0].gt)

    def test_foreground_fraction(self):
        for s in synthetic_dataset(50, 3, (48, 48)):
            assert 0.05 <= s.gt.mean() <= 0.6

    def test_noise_free_depth_threshold_reproduces_mask(self):
        for s in synthetic_dataset(30, 5, (40, 56)):
            assert np.array_equal(s.depth[0] > 0.5, s.gt[0] > 0.5)

    @settings(max_examples=15, deadline=None)
    @given(n=st.integers(1, 3), seed=st.integers(0, 10_000), h=st.integers(16, 48),
           w=st.integers(16, 48), noise=st.sampled_from([0.0, 0.05]))
    def test_samples_satisfy_invariants(self, n, seed, h, w, noise):
        samples = synthetic_dataset(n, seed, (h, w), noise)
        assert len(samples) == n
        for s in samples:
            check_sample(s, (h, w))
            assert 0 <= s.rgb.min() and s.rgb.max() <= 1
            assert 0 <= s.depth.min() and s.depth.max() <= 1
            check_sample(preprocess(s, (32, 32), train=True, rng=np.random.default_rng(seed)), (32, 32))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            synthetic_dataset(0)


class TestLoad:
    def test_roundtrip_through_disk(self, tmp_path):
        samples = synthetic_dataset(3, 1, (24, 32))
        write_dataset(samples, tmp_path)
        loaded = load_dataset(DatasetSpec(str(tmp_path)))
        assert [s.stem for s in loaded] == [s.stem for s in samples]
        for a, b in zip(samples, loaded):
            check_sample(b)
            assert np.array_equal(a.gt, b.gt)
            assert np.abs(a.depth - b.depth).max() <= 0.5 / 255 + 1e-6

    def test_sorted_stems(self, tmp_path):
        samples = synthetic_dataset(3, 1, (16, 16))
        for s, name in zip(samples, ["c", "a", "b"]):
            s.stem = name
        write_dataset(samples, tmp_path)
        assert [s.stem for s in load_dataset(DatasetSpec(str(tmp_path)))] == ["a", "b", "c"]

    def test_missing_depth_named(self, tmp_path):
        write_dataset(synthetic_dataset(3, 1, (16, 16)), tmp_path)
        (tmp_path / "depth" / "synth_0001.png").unlink()
        with pytest.raises(DatasetError) as exc:
            load_dataset(DatasetSpec(str(tmp_path)))
        assert len(exc.value.errors) == 1 and "synth_0001" in exc.value.errors[0]
        assert "depth/" in exc.value.errors[0]

    def test_missing_subdirectory_and_bad_file(self, tmp_path):
        write_dataset(synthetic_dataset(2, 1, (16, 16)), tmp_path)
        (tmp_path / "GT" / "synth_0000.png").write_bytes(b"garbage")
        with pytest.raises(DatasetError) as exc:
            load_dataset(DatasetSpec(str(tmp_path)))
        assert "synth_0000" in exc.value.errors[0]
        with pytest.raises(DatasetError) as exc:
            load_dataset(DatasetSpec(str(tmp_path / "nowhere")))
        assert len(exc.value.errors) == 3

    def test_three_channel_depth_averaged(self, tmp_path):
        write_dataset(synthetic_dataset(1, 1, (16, 16)), tmp_path)
        p = tmp_path / "depth" / "synth_0000.png"
        d = np.asarray(Image.open(p))
        rgb_depth = np.stack([d, d, np.zeros_like(d)], axis=2)
        Image.fromarray(rgb_depth).save(p)
        s = load_dataset(DatasetSpec(str(tmp_path)))[0]
        np.testing.assert_allclose(s.depth[0], d / 255.0 * 2 / 3, atol=1e-6)

    def test_invert_depth(self, tmp_path):
        write_dataset(synthetic_dataset(1, 1, (16, 16)), tmp_path)
        a = load_dataset(DatasetSpec(str(tmp_path)))[0]
        b = load_dataset(DatasetSpec(str(tmp_path), invert_depth=True))[0]
        np.testing.assert_allclose(a.depth + b.depth, 1.0, atol=1e-6)

    def test_env_data_root(self, tmp_path, monkeypatch):
        write_dataset(synthetic_dataset(1, 1, (16, 16)), tmp_path / "set")
        monkeypatch.setenv(DATA_ROOT_ENV, str(tmp_path))
        assert len(load_dataset(DatasetSpec("set"))) == 1

    def test_nju_fixture_preprocessed_to_352(self, tmp_path):
        samples = load_dataset(DatasetSpec(str(nju_layout(tmp_path / "NJU2K"))))
        assert len(samples) == 5
        for s in samples:
            assert s.size == (480, 640)
            out = preprocess(s, (352, 352))
            check_sample(out, (352, 352))


class TestPreprocess:
    def test_constant_depth_becomes_half(self):
        s = synthetic_dataset(1, 0, (16, 16))[0]
        s.depth[:] = 0.3
        assert np.all(preprocess(s, (16, 16)).depth == 0.5)

    def test_depth_min_max(self):
        out = preprocess(synthetic_dataset(1, 0, (20, 20))[0], (32, 32))
        assert out.depth.min() == 0.0 and out.depth.max() == 1.0

    def test_rgb_standardised(self):
        s = synthetic_dataset(1, 0, (8, 8))[0]
        out = preprocess(s, (8, 8), mean=(0.5, 0.5, 0.5), std=(0.25, 0.25, 0.25))
        np.testing.assert_allclose(out.rgb, (s.rgb - 0.5) / 0.25, atol=1e-6)

    def test_flip_is_seeded_and_consistent(self):
        s = synthetic_dataset(1, 0, (16, 16))[0]
        outs = [preprocess(s, (16, 16), train=True, rng=np.random.default_rng(i)) for i in range(8)]
        flipped = [o for o in outs if not np.array_equal(o.gt, s.gt)]
        assert 0 < len(flipped) < 8
        for o in flipped:
            assert np.array_equal(o.gt[..., ::-1], s.gt)
            assert np.array_equal(o.depth[..., ::-1], preprocess(s, (16, 16)).depth)
        again = preprocess(s, (16, 16), train=True, rng=np.random.default_rng(3))
        assert np.array_equal(again.rgb, outs[3].rgb)

    def test_no_flip_at_test_time(self):
        s = synthetic_dataset(1, 0, (16, 16))[0]
        for i in range(5):
            assert np.array_equal(preprocess(s, (16, 16), train=False, rng=np.random.default_rng(i)).gt, s.gt)

    def test_batch(self):
        batch = to_batch([preprocess(s, (16, 16)) for s in synthetic_dataset(3, 0, (16, 16))])
        assert [t.shape for t in batch] == [(3, 3, 16, 16), (3, 1, 16, 16), (3, 1, 16, 16)]

    def test_spec_validates_split(self):
        with pytest.raises(ValueError):
            DatasetSpec("x", split="val")
