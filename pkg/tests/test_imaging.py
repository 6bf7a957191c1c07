import numpy as np
import pytest

from prefopt.errors import InvalidInputError
from prefopt.imaging import PARAM_COUNT, downscale, render, thumbnail_grid
from prefopt.plane import build_plane

IDENTITY = np.full(PARAM_COUNT, 0.5)


@pytest.fixture
def image(rng):
    return rng.integers(0, 256, size=(90, 140, 3), dtype=np.uint8)


class TestRender:
    def test_identity_is_byte_exact(self, image):
        assert np.array_equal(render(image, IDENTITY), image)

    def test_white_stays_white_under_max_brightness(self):
        white = np.full((8, 8, 3), 255, dtype=np.uint8)
        p = IDENTITY.copy()
        p[0] = 1.0
        assert np.array_equal(render(white, p), white)

    def test_zero_saturation_desaturates(self, image):
        p = IDENTITY.copy()
        p[2] = 0.0
        out = render(image, p)
        assert np.array_equal(out[..., 0], out[..., 1])
        assert np.array_equal(out[..., 1], out[..., 2])

    def test_brightness_monotone(self, image):
        outs = []
        for b in (0.3, 0.5, 0.7):
            p = IDENTITY.copy()
            p[0] = b
            outs.append(render(image, p).astype(int))
        assert np.all(outs[1] >= outs[0])
        assert np.all(outs[2] >= outs[1])

    def test_deterministic(self, image):
        p = np.linspace(0.1, 0.9, PARAM_COUNT)
        assert np.array_equal(render(image, p), render(image, p))

    def test_contrast_pivots_at_middle_gray(self):
        # middle gray in linear space: v=0.5 -> byte round(0.5^(1/2.2)*255)
        gray_byte = int(np.floor(0.5 ** (1 / 2.2) * 255 + 0.5))
        gray = np.full((4, 4, 3), gray_byte, dtype=np.uint8)
        p = IDENTITY.copy()
        p[1] = 0.9
        out = render(gray, p)
        assert np.all(np.abs(out.astype(int) - gray_byte) <= 1)

    def test_parameter_validation(self, image):
        with pytest.raises(InvalidInputError):
            render(image, np.full(11, 0.5))
        with pytest.raises(InvalidInputError):
            render(image, np.full(PARAM_COUNT, 1.5))
        with pytest.raises(InvalidInputError):
            render(image.astype(np.float32), IDENTITY)


class TestThumbnails:
    def test_downscale_constant_stays_constant(self):
        const = np.full((400, 600, 3), 123, dtype=np.uint8)
        small = downscale(const)
        assert small.shape[1] == 256
        assert np.unique(small).tolist() == [123]

    def test_small_images_left_alone(self, image):
        assert downscale(image).shape == image.shape

    def test_grid_composition(self, rng):
        image = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        center = np.full(PARAM_COUNT, 0.5)
        plane = build_plane(center, np.full(PARAM_COUNT, 0.6), np.full(PARAM_COUNT, 0.4))
        thumbs = thumbnail_grid(image, plane)
        assert len(thumbs) == 25
        np.testing.assert_array_equal(thumbs[12], render(downscale(image), center))

    def test_identical_grid_points_identical_rasters(self, rng):
        image = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        center = np.full(PARAM_COUNT, 0.5)
        plane = build_plane(center, center + 1e-12, center)
        thumbs = thumbnail_grid(image, plane)
        assert all(np.array_equal(t, thumbs[0]) for t in thumbs)

    def test_dimension_must_be_twelve(self, image):
        plane = build_plane([0.5, 0.5], [0.6, 0.5], [0.5, 0.6])
        with pytest.raises(InvalidInputError):
            thumbnail_grid(image, plane)
