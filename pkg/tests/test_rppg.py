import json

import numpy as np
import pytest

from rppg_bp.errors import EmptyInput, EmptyMask, FrameShapeMismatch, SourceTooSmall
from rppg_bp.rppg import (GRID, default_mask, downsample_frame, extract_rgb_means, extract_rppg, load_frame,
                          read_manifest, read_mask, save_frame, spatial_average_green, write_manifest,
                          write_mask)
from rppg_bp.signal_core import TimeSeries
from rppg_bp.synth import frames_from_signal

FULL = np.ones((GRID, GRID), dtype=bool)


def flat_frame(r=0, g=0, b=0, size=GRID):
    f = np.zeros((size, size, 3), dtype=np.uint8)
    f[..., 0], f[..., 1], f[..., 2] = r, g, b
    return f


class TestDownsample:
    def test_uniform(self):
        out = downsample_frame(flat_frame(128, 128, 128, size=200))
        assert out.shape == (72, 72, 3) and np.all(out == 128)

    def test_block_mean(self):
        block = np.array([[100, 100], [200, 200]], dtype=np.uint8)
        src = np.repeat(np.tile(block, (72, 72))[:, :, None], 3, axis=2)
        assert np.all(downsample_frame(src) == 150)

    def test_halves(self):
        src = np.zeros((144, 288, 3), dtype=np.uint8)
        src[:, 144:, 1] = 255
        out = downsample_frame(src)
        assert np.all(out[:, :36, 1] == 0) and np.all(out[:, 36:, 1] == 255)

    def test_non_integer_ratio_box_mean(self):
        src = np.random.default_rng(3).integers(0, 256, (100, 90, 3)).astype(np.uint8)
        out = downsample_frame(src)
        # total intensity is preserved up to rounding
        assert abs(out.astype(float).mean() - src.astype(float).mean()) < 0.5

    def test_too_small(self):
        with pytest.raises(SourceTooSmall):
            downsample_frame(flat_frame(size=71))


class TestAverage:
    def test_all_green(self):
        assert spatial_average_green(flat_frame(g=200), FULL) == 200.0

    def test_masked_cell(self):
        f = flat_frame(g=100)
        f[5, 5, 1] = 255
        mask = FULL.copy()
        mask[5, 5] = False
        assert spatial_average_green(f, mask) == 100.0

    def test_checkerboard(self):
        f = flat_frame()
        f[..., 1] = 255 * ((np.add.outer(np.arange(72), np.arange(72)) % 2))
        assert spatial_average_green(f, FULL) == 127.5

    def test_empty_mask(self):
        with pytest.raises(EmptyMask):
            spatial_average_green(flat_frame(), np.zeros((72, 72), dtype=bool))

    def test_default_mask_band(self):
        m = default_mask()
        assert not m[18:33].any() and m[:18].all() and m[33:].all()

    def test_mask_monotonicity(self, rng):
        g = rng.integers(0, 256, (72, 72, 3)).astype(float)
        mask = FULL.copy()
        mask[1, :3] = False
        # give the dropped cells the mean of the rest, so the full-mask mean equals it too
        g[1, :3, 1] = spatial_average_green(g, mask)
        assert spatial_average_green(g, mask) == pytest.approx(spatial_average_green(g, FULL), abs=1e-9)


class TestExtract:
    def test_identical_frames(self):
        x = extract_rppg([flat_frame(g=80)] * 10)
        assert len(x) == 10 and np.all(x.samples == 80.0) and x.fs == 60.0

    def test_sine_recovered(self):
        t = np.arange(600) / 60.0
        sig = TimeSeries(np.sin(2 * np.pi * 1.2 * t), 60.0)
        frames = frames_from_signal(sig, base=120.0, gain=8.0)
        got = (extract_rppg(frames).samples - 120.0) / 8.0
        np.testing.assert_allclose(got, sig.samples, atol=1e-9)

    def test_eye_band_ignored(self):
        # the eye rows flicker randomly; default mask must hide them entirely
        sig = TimeSeries(np.zeros(20), 60.0)
        x = extract_rppg(frames_from_signal(sig, eye_flicker=60.0))
        assert np.all(x.samples == 120.0)

    def test_red_only_changes(self):
        frames = [flat_frame(r=int(128 + 100 * np.sin(i)), g=90) for i in range(30)]
        assert np.all(extract_rppg(frames, mask=FULL).samples == 90.0)

    def test_composition_identity(self, rng):
        frames = [rng.integers(0, 256, (72, 72, 3)).astype(np.uint8) for _ in range(7)]
        x = extract_rppg(frames, 30.0)
        np.testing.assert_array_equal(x.samples, [spatial_average_green(f) for f in frames])
        np.testing.assert_array_equal(extract_rgb_means(frames)[:, 1], x.samples)

    def test_errors(self):
        with pytest.raises(EmptyInput):
            extract_rppg([])
        with pytest.raises(FrameShapeMismatch):
            extract_rppg([flat_frame(), flat_frame(size=80)])


class TestFiles:
    def test_mask_roundtrip(self, tmp_path):
        write_mask(tmp_path / "m.txt", default_mask())
        np.testing.assert_array_equal(read_mask(tmp_path / "m.txt"), default_mask())
        (tmp_path / "bad.txt").write_text("01\n")
        with pytest.raises(FrameShapeMismatch):
            read_mask(tmp_path / "bad.txt")

    @pytest.mark.parametrize("suffix", [".png", ".rgb24"])
    def test_frame_roundtrip(self, tmp_path, rng, suffix):
        f = rng.integers(0, 256, (80, 90, 3)).astype(np.uint8)
        save_frame(tmp_path / f"a{suffix}", f)
        np.testing.assert_array_equal(load_frame(tmp_path / f"a{suffix}", 90, 80), f)

    def test_manifest_downsamples(self, tmp_path):
        names = []
        for i in range(4):
            save_frame(tmp_path / f"f{i}.rgb24", flat_frame(g=10 * i, size=144))
            names.append(f"f{i}.rgb24")
        write_manifest(tmp_path / "manifest.json", names, fs=30, width=144, height=144)
        assert json.loads((tmp_path / "manifest.json").read_text())["fs"] == 30
        fs, frames = read_manifest(tmp_path / "manifest.json")
        assert fs == 30.0
        np.testing.assert_array_equal(extract_rppg(frames, fs).samples, [0, 10, 20, 30])
