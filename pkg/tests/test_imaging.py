import numpy as np
import pytest

from sidelane.imaging import (
    BinaryMask,
    ImageBuffer,
    RectROI,
    crop,
    gray_to_rgb,
    load_image,
    load_mask,
    resize_bilinear,
    save_image,
    save_mask,
    to_grayscale,
)


def solid(r, g, b, w=4, h=4):
    return ImageBuffer(np.full((h, w, 3), (r, g, b), dtype=np.uint8))


class TestGrayscale:
    def test_white_maps_to_max(self):
        assert to_grayscale(solid(255, 255, 255)).pixels[0, 0, 0] == 255

    def test_black_maps_to_min(self):
        assert to_grayscale(solid(0, 0, 0)).pixels[0, 0, 0] == 0

    def test_pure_red(self):
        # 0.299 * 255 = 76.245 -> 76
        assert to_grayscale(solid(255, 0, 0)).pixels[0, 0, 0] == 76

    def test_rejects_single_channel(self):
        gray = ImageBuffer(np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            to_grayscale(gray)

    def test_idempotent_through_replication(self, rng):
        img = ImageBuffer(rng.integers(0, 256, (16, 16, 3), dtype=np.uint8))
        once = to_grayscale(img)
        twice = to_grayscale(gray_to_rgb(once))
        assert once.same_pixels(twice)


class TestCrop:
    def test_identity_crop(self, rng):
        img = ImageBuffer(rng.integers(0, 256, (6, 8, 3), dtype=np.uint8))
        out = crop(img, RectROI(0, 0, 8, 6))
        assert out.same_pixels(img)

    def test_interior_block(self):
        grad = np.arange(16, dtype=np.uint8).reshape(4, 4)
        img = ImageBuffer(grad)
        out = crop(img, RectROI(1, 1, 2, 2))
        assert out.pixels[:, :, 0].tolist() == [[5, 6], [9, 10]]

    def test_out_of_bounds_names_edge(self):
        img = ImageBuffer(np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ValueError, match="right"):
            crop(img, RectROI(0, 0, 5, 4))
        with pytest.raises(ValueError, match="bottom"):
            crop(img, RectROI(0, 0, 4, 5))

    def test_nested_crops_compose(self, rng):
        img = ImageBuffer(rng.integers(0, 256, (20, 30, 3), dtype=np.uint8))
        a = RectROI(3, 4, 20, 12)
        b = RectROI(2, 1, 10, 8)
        nested = crop(crop(img, a), b)
        direct = crop(img, RectROI(a.x0 + b.x0, a.y0 + b.y0, b.width, b.height))
        assert nested.same_pixels(direct)


class TestResize:
    def test_identity_scale(self, rng):
        img = ImageBuffer(rng.integers(0, 256, (7, 9, 3), dtype=np.uint8))
        out = resize_bilinear(img, 9, 7)
        assert np.abs(out.as_float() - img.as_float()).max() <= 1

    def test_two_to_three(self):
        img = ImageBuffer(np.array([[0, 255]], dtype=np.uint8))
        out = resize_bilinear(img, 3, 1)
        vals = out.pixels[0, :, 0]
        assert vals[0] == 0 and vals[2] == 255
        assert abs(int(vals[1]) - 128) <= 1

    @pytest.mark.parametrize("dims", [(1, 1), (3, 2), (10, 5), (31, 17)])
    def test_constant_stays_constant(self, dims):
        img = ImageBuffer(np.full((4, 6, 3), 128, dtype=np.uint8))
        out = resize_bilinear(img, *dims)
        assert (out.pixels == 128).all()

    def test_rejects_zero_target(self):
        img = ImageBuffer(np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            resize_bilinear(img, 0, 4)


class TestFileIO:
    def test_png_roundtrip_rgb(self, rng, tmp_path):
        img = ImageBuffer(rng.integers(0, 256, (16, 16, 3), dtype=np.uint8))
        path = tmp_path / "frame.png"
        save_image(img, path)
        assert load_image(path).same_pixels(img)

    def test_png_roundtrip_gray(self, rng, tmp_path):
        img = ImageBuffer(rng.integers(0, 256, (16, 16), dtype=np.uint8))
        path = tmp_path / "gray.png"
        save_image(img, path)
        back = load_image(path)
        assert back.channels == 1
        assert back.same_pixels(img)

    def test_jpeg_decodes(self, tmp_path):
        img = ImageBuffer(np.full((8, 8, 3), 90, dtype=np.uint8))
        path = tmp_path / "frame.jpg"
        save_image(img, path)
        back = load_image(path)
        assert (back.width, back.height, back.channels) == (8, 8, 3)

    def test_missing_file_raises_with_path(self, tmp_path):
        with pytest.raises(OSError):
            load_image(tmp_path / "nope.png")

    def test_corrupt_stream(self, tmp_path):
        path = tmp_path / "bad.png"
        path.write_bytes(b"not a png at all")
        with pytest.raises(OSError, match="bad.png"):
            load_image(path)

    def test_mask_roundtrip_bit_exact(self, rng, tmp_path):
        mask = BinaryMask(rng.random((12, 18)) > 0.5)
        path = tmp_path / "mask.png"
        save_mask(mask, path)
        assert np.array_equal(load_mask(path).bits, mask.bits)


class TestMask:
    def test_threshold_at_128(self):
        img = ImageBuffer(np.array([[127, 128, 255, 0]], dtype=np.uint8))
        mask = BinaryMask.from_image(img)
        assert mask.bits[0].tolist() == [False, True, True, False]


class TestBufferInvariants:
    def test_rejects_bad_channel_count(self):
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros((4, 4, 2), dtype=np.uint8))

    def test_rejects_non_uint8(self):
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros((4, 4), dtype=np.float32))

    def test_pixels_are_immutable(self):
        img = ImageBuffer(np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            img.pixels[0, 0] = 1
