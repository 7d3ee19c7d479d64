import numpy as np
import pytest

from app.core.errors import InvalidArgumentError
from app.models.image import as_image
from app.services.image_service import (
    blur,
    convolve,
    disk_coverage,
    disk_kernel,
    gradient,
    to_grayscale,
)


@pytest.mark.parametrize("radius", [0.5, 1.0, 2.75, 6.0])
def test_disk_kernel_is_normalized_and_symmetric(radius):
    k = disk_kernel(radius)
    side = 2 * int(np.ceil(radius)) + 1
    assert k.shape == (side, side)
    assert abs(k.sum() - 1.0) < 1e-12
    assert np.array_equal(k, k.T)
    assert np.array_equal(k, k[::-1, :])
    assert np.array_equal(k, np.rot90(k))


@pytest.mark.parametrize("radius", [1.0, 2.75, 6.0])
def test_disk_kernel_close_to_fine_coverage(radius):
    fine = disk_coverage(radius, subsamples=256)
    # 16x16 subsampling leaves about 4e-3 per weight; 1e-3 would need a finer grid
    assert np.allclose(disk_kernel(radius), fine / fine.sum(), atol=5e-3)


@pytest.mark.parametrize("radius", [0.0, -1.0, 16.5, float("nan")])
def test_disk_kernel_rejects_bad_radius(radius):
    with pytest.raises(InvalidArgumentError):
        disk_kernel(radius)


def test_convolve_matches_naive_reflect_loop(rng):
    img = rng.uniform(size=(9, 7, 3))
    k = rng.uniform(size=(3, 3))
    padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="symmetric")
    expected = np.zeros_like(img)
    for y in range(9):
        for x in range(7):
            for i in range(3):
                for j in range(3):
                    # true convolution: the kernel is flipped
                    expected[y, x] += k[i, j] * padded[y + 2 - i, x + 2 - j]
    assert np.allclose(convolve(img, k), expected, atol=1e-12)


def test_convolve_unit_kernel_is_identity(rng):
    img = rng.uniform(size=(5, 6, 3))
    assert np.array_equal(convolve(img, np.array([[1.0]])), img)


def test_convolve_is_linear(rng):
    a = rng.uniform(size=(12, 12, 1))
    b = rng.uniform(size=(12, 12, 1))
    k = disk_kernel(2.0)
    lhs = convolve(0.3 * a + 0.7 * b, k)
    assert np.allclose(lhs, 0.3 * convolve(a, k) + 0.7 * convolve(b, k), atol=1e-9)


def test_convolve_rejects_oversized_kernel():
    with pytest.raises(InvalidArgumentError):
        convolve(np.zeros((4, 4)), np.ones((5, 5)) / 25)


def test_convolve_rejects_even_kernel():
    with pytest.raises(InvalidArgumentError):
        convolve(np.zeros((8, 8)), np.ones((2, 2)) / 4)


def test_blur_preserves_constant_image():
    img = np.full((20, 24, 3), 0.37)
    assert np.allclose(blur(img, 3.0), img)


def test_blur_radius_zero_is_identity(rng):
    img = rng.uniform(size=(6, 5, 1))
    out = blur(img, 0)
    assert np.array_equal(out, img)
    assert out is not img


def test_blur_spreads_a_single_dot():
    img = np.zeros((21, 21, 1))
    img[10, 10, 0] = 1.0
    out = blur(img, 2.0)[:, :, 0]
    assert np.isclose(out.sum(), 1.0)
    assert out[10, 10] < 1.0
    assert out[10, 12] > 0.0
    assert out[10, 14] == 0.0


def test_grayscale_uses_luma_weights():
    img = np.array([[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]]])
    gray = to_grayscale(img)
    assert gray.shape == (1, 4, 1)
    assert np.allclose(gray[0, :, 0], [0.299, 0.587, 0.114, 1.0])


def test_gradient_forward_differences():
    img = np.array([[0.0, 1.0, 3.0], [2.0, 2.0, 2.0]])
    gx, gy = gradient(img)
    assert np.array_equal(gx[:, :, 0], [[1.0, 2.0, 0.0], [0.0, 0.0, 0.0]])
    assert np.array_equal(gy[:, :, 0], [[2.0, 1.0, -1.0], [0.0, 0.0, 0.0]])


@pytest.mark.parametrize("shape", [(4, 4, 2), (4,), (0, 3)])
def test_as_image_rejects_bad_shapes(shape):
    with pytest.raises(InvalidArgumentError):
        as_image(np.zeros(shape))
