import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vehiclegen.imaging import (
    Box,
    alpha_blend,
    crop_patch,
    erase,
    lab_to_rgb,
    make_mask,
    paste_patch,
    resize_bilinear,
    rgb_to_gray,
    rgb_to_lab,
    roi_resize,
)


def boxes_in(h, w):
    return st.tuples(
        st.integers(0, w - 1), st.integers(0, h - 1), st.integers(1, w), st.integers(1, h)
    ).filter(lambda t: t[0] + t[2] <= w and t[1] + t[3] <= h).map(
        lambda t: Box(x=t[0], y=t[1], w=t[2], h=t[3])
    )


class TestColorimetry:
    def test_white(self):
        lab = rgb_to_lab(np.array([[[1.0, 1.0, 1.0]]]))[0, 0]
        assert lab[0] == pytest.approx(100.0, abs=1e-3)
        assert abs(lab[1]) < 1e-3 and abs(lab[2]) < 1e-3

    def test_black(self):
        lab = rgb_to_lab(np.array([[[0.0, 0.0, 0.0]]]))[0, 0]
        assert np.allclose(lab, 0.0, atol=1e-9)

    def test_red_against_reference(self):
        lab = rgb_to_lab(np.array([[[1.0, 0.0, 0.0]]]))[0, 0]
        assert lab[0] == pytest.approx(53.2, abs=0.1)
        assert lab[1] == pytest.approx(80.1, abs=0.1)
        assert lab[2] == pytest.approx(67.2, abs=0.1)

    def test_matches_skimage_oracle(self):
        skimage_color = pytest.importorskip("skimage.color")
        rng = np.random.default_rng(0)
        rgb = rng.random((50, 50, 3))
        ours = rgb_to_lab(rgb)
        ref = skimage_color.rgb2lab(rgb)
        assert np.abs(ours - ref).max() < 0.1

    def test_round_trip_bound(self):
        rng = np.random.default_rng(1)
        rgb = rng.random((100, 100, 3))
        back = lab_to_rgb(rgb_to_lab(rgb))
        assert np.abs(back - rgb).max() <= 1.0 / 255.0

    def test_lab_to_rgb_anchors(self):
        assert np.allclose(
            lab_to_rgb(np.array([[[100.0, 0.0, 0.0]]])), 1.0, atol=1.0 / 255.0
        )
        assert np.allclose(lab_to_rgb(np.array([[[0.0, 0.0, 0.0]]])), 0.0, atol=1e-6)

    def test_out_of_gamut_clipped(self):
        rgb = lab_to_rgb(np.array([[[50.0, 200.0, -200.0]]]))
        assert rgb.min() >= 0.0 and rgb.max() <= 1.0

    def test_gray_anchors(self):
        assert rgb_to_gray(np.ones((1, 1, 3)))[0, 0] == pytest.approx(1.0, abs=1e-4)
        assert rgb_to_gray(np.zeros((1, 1, 3)))[0, 0] == pytest.approx(0.0, abs=1e-9)
        mid = rgb_to_gray(np.full((1, 1, 3), 0.5))[0, 0]
        assert mid == pytest.approx(0.5331, abs=1e-3)


class TestMasking:
    def test_make_mask_example(self):
        mask = make_mask(Box(0, 0, 2, 3), 4, 4)
        assert mask.sum() == 6
        assert mask[:3, :2].all() and not mask[3:, :].any() and not mask[:, 2:].any()

    def test_full_and_small(self):
        assert make_mask(Box(0, 0, 4, 4), 4, 4).all()
        assert make_mask(Box(1, 1, 2, 2), 180, 320).sum() == 4

    def test_rejects_out_of_bounds(self):
        with pytest.raises(ValueError):
            make_mask(Box(3, 3, 2, 2), 4, 4)

    @given(box=boxes_in(30, 40))
    def test_mask_sum_property(self, box):
        assert make_mask(box, 30, 40).sum() == box.w * box.h

    def test_erase(self):
        img = np.ones((4, 4))
        assert not erase(img, make_mask(Box(0, 0, 4, 4), 4, 4), 0.0).any()

    def test_erase_outside_untouched(self):
        rng = np.random.default_rng(0)
        img = rng.random((10, 12, 3))
        mask = make_mask(Box(2, 3, 4, 5), 10, 12)
        out = erase(img, mask, 0.5)
        outside = mask < 0.5
        assert np.array_equal(out[outside], img[outside])

    def test_erase_dim_mismatch(self):
        with pytest.raises(ValueError):
            erase(np.ones((4, 4)), np.ones((5, 5)), 0.0)

    def test_erase_paste_inverse(self):
        rng = np.random.default_rng(0)
        img = rng.random((8, 9))
        box = Box(1, 2, 3, 4)
        saved = crop_patch(img, box)
        erased = erase(img, make_mask(box, 8, 9), 0.0)
        assert np.array_equal(paste_patch(erased, saved, box), img)


class TestCropPaste:
    def test_crop_full(self):
        img = np.arange(12.0).reshape(3, 4)
        assert np.array_equal(crop_patch(img, Box(0, 0, 4, 3)), img)

    def test_crop_single_pixel(self):
        img = np.arange(12.0).reshape(3, 4)
        assert crop_patch(img, Box(0, 0, 1, 1))[0, 0] == img[0, 0]

    @given(box=boxes_in(16, 20))
    def test_crop_paste_roundtrip(self, box):
        rng = np.random.default_rng(0)
        img = rng.random((16, 20, 3))
        assert np.array_equal(paste_patch(img, crop_patch(img, box), box), img)

    def test_paste_shape_mismatch(self):
        with pytest.raises(ValueError):
            paste_patch(np.zeros((8, 8)), np.zeros((2, 2)), Box(0, 0, 3, 3))


class TestResize:
    def test_constant(self):
        out = resize_bilinear(np.full((5, 7), 0.3), 11, 13)
        assert out.shape == (11, 13)
        assert np.allclose(out, 0.3)

    def test_identity_bit_exact(self):
        rng = np.random.default_rng(0)
        img = rng.random((9, 11, 3))
        assert np.array_equal(resize_bilinear(img, 9, 11), img)

    def test_monotone_row(self):
        img = np.array([[0.0, 1.0], [0.0, 1.0]])
        out = resize_bilinear(img, 2, 4)
        assert (np.diff(out, axis=1) >= -1e-12).all()

    @given(
        h=st.integers(2, 8), w=st.integers(2, 8),
        oh=st.integers(1, 12), ow=st.integers(1, 12),
        seed=st.integers(0, 100),
    )
    @settings(max_examples=40)
    def test_within_hull(self, h, w, oh, ow, seed):
        img = np.random.default_rng(seed).random((h, w))
        out = resize_bilinear(img, oh, ow)
        assert out.min() >= img.min() - 1e-9 and out.max() <= img.max() + 1e-9

    def test_roi_resize_exact_crop(self):
        rng = np.random.default_rng(0)
        img = rng.random((100, 120, 3))
        box = Box(10, 20, 64, 64)
        assert np.array_equal(roi_resize(img, box), crop_patch(img, box))

    def test_roi_resize_constant(self):
        img = np.full((40, 40, 3), 0.7)
        out = roi_resize(img, Box(3, 5, 17, 23))
        assert out.shape == (64, 64, 3)
        assert np.allclose(out, 0.7)

    def test_roi_resize_hull(self):
        img = np.indices((32, 32)).sum(axis=0) % 2.0
        out = roi_resize(img, Box(0, 0, 32, 32))
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestAlphaBlend:
    def _pair(self):
        rng = np.random.default_rng(0)
        return rng.random((20, 24, 3)), rng.random((20, 24, 3))

    def test_band_zero(self):
        composed, original = self._pair()
        box = Box(4, 5, 8, 7)
        out = alpha_blend(composed, original, box, 0)
        ys, xs = box.slices
        assert np.array_equal(out[ys, xs], composed[ys, xs])
        mask = np.ones((20, 24), bool)
        mask[ys, xs] = False
        assert np.array_equal(out[mask], original[mask])

    def test_identity_when_equal(self):
        _, original = self._pair()
        out = alpha_blend(original, original, Box(4, 5, 8, 7), 3)
        assert np.allclose(out, original)

    def test_mid_band_half(self):
        composed, original = self._pair()
        box = Box(4, 5, 8, 7)
        # with band=1 the border pixel center sits exactly mid-band
        out = alpha_blend(composed, original, box, 1)
        expect = 0.5 * composed[5, 4] + 0.5 * original[5, 4]
        assert np.allclose(out[5, 4], expect)

    def test_band_clamped(self):
        composed, original = self._pair()
        out = alpha_blend(composed, original, Box(4, 5, 8, 7), 100)
        assert np.isfinite(out).all()

    def test_outside_untouched(self):
        composed, original = self._pair()
        box = Box(4, 5, 8, 7)
        out = alpha_blend(composed, original, box, 2)
        mask = np.ones((20, 24), bool)
        ys, xs = box.slices
        mask[ys, xs] = False
        assert np.array_equal(out[mask], original[mask])

    def test_deep_interior_composed(self):
        composed, original = self._pair()
        box = Box(2, 2, 15, 15)
        out = alpha_blend(composed, original, box, 2)
        assert np.array_equal(out[9, 9], composed[9, 9])
