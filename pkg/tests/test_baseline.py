import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from somqe.baseline import rgb_mean
from somqe.raster import GrayLevel, Raster
from somqe.simulate import ChangeSpec, iter_series
from somqe.stats import linear_fit


class TestRgbMean:
    def test_all_white(self):
        rec = rgb_mean(Raster.uniform(8, 8, GrayLevel.WHITE), image_id="w")
        assert rec.mean_r == rec.mean_g == rec.mean_b == 255.0
        assert rec.mean_gray == 255.0 and rec.display_mean == 255.0
        assert rec.image_id == "w"

    def test_single_black_pixel_analytic(self):
        arr = np.full((10, 10, 3), 255, dtype=np.uint8)
        arr[4, 7] = 0
        rec = rgb_mean(Raster.from_u8(arr))
        assert rec.mean_gray == pytest.approx(255 * 99 / 100, abs=1e-9)
        assert rec.display_mean == 252.45

    def test_display_rounding_invariant(self, rng):
        for _ in range(20):
            r = Raster.from_u8(rng.integers(0, 256, (9, 11, 3), dtype=np.uint8))
            rec = rgb_mean(r)
            assert rec.display_mean == round(rec.mean_gray * 1000) / 1000
            assert 0.0 <= rec.mean_r <= 255.0
            assert 0.0 <= rec.display_mean <= 255.0

    @given(arrays(np.uint8, st.tuples(st.integers(2, 6), st.integers(2, 6), st.just(3))))
    def test_order_independence(self, arr):
        base = rgb_mean(Raster.from_u8(arr))
        flipped = rgb_mean(Raster.from_u8(arr[::-1, ::-1].copy()))
        assert flipped.mean_gray == pytest.approx(base.mean_gray, rel=1e-12, abs=1e-12)

    def test_channel_means_independent(self):
        arr = np.zeros((4, 4, 3), dtype=np.uint8)
        arr[..., 0] = 100
        arr[..., 1] = 50
        arr[..., 2] = 200
        rec = rgb_mean(Raster.from_u8(arr))
        assert (rec.mean_r, rec.mean_g, rec.mean_b) == (100.0, 50.0, 200.0)
        assert rec.mean_gray == pytest.approx(350 / 3, abs=1e-12)


class TestSeriesAffinity:
    def test_full_precision_mean_is_affine_in_k(self):
        gt = Raster.uniform(40, 40, GrayLevel.WHITE)
        spec = ChangeSpec(
            source=GrayLevel.WHITE, target=GrayLevel.DARK_GRAY, steps=12, seed=4
        )
        ks, means = [], []
        for k, img in iter_series(gt, spec):
            ks.append(float(k))
            means.append(rgb_mean(img).mean_gray)
        fit = linear_fit(np.array(ks), np.array(means))
        assert fit.r_squared > 1 - 1e-9
        expected_slope = (64 - 255) / 1600
        assert fit.slope == pytest.approx(expected_slope, rel=1e-9)

    def test_sub_quantum_drift_invisible_at_display_precision(self):
        # 20 steps of (242-255)/589824 move the mean 4.4e-4 display units in
        # total, under half a display quantum: the rounded value never moves
        gt = Raster.uniform(768, 768, GrayLevel.WHITE)
        spec = ChangeSpec(
            source=GrayLevel.WHITE, target=GrayLevel.G242, steps=20, seed=1
        )
        displays, full = set(), set()
        for _, img in iter_series(gt, spec):
            rec = rgb_mean(img)
            displays.add(rec.display_mean)
            full.add(rec.mean_gray)
        assert displays == {255.0}
        assert len(full) == 20
