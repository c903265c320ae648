import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from gglnet.model import image_gradient
from gglnet.preprocess import (
    InvalidImageError,
    PyramidShapeError,
    build_pyramid,
    gradient_magnitude,
    gradient_responses,
)


def test_constant_image_has_zero_gradient():
    out = gradient_magnitude(np.full((16, 16), 0.7))
    assert out.shape == (16, 16)
    assert np.all(out == 0.0)


def test_step_edge_center_magnitude():
    img = np.zeros((5, 5))
    img[:, 2:] = 1.0
    gx, gy = gradient_responses(img)
    assert gx[2, 2] == 4.0
    assert gy[2, 2] == 0.0
    assert gradient_magnitude(img, normalize=False)[2, 2] == 4.0


def test_single_bright_pixel_normalizes_to_one():
    img = np.zeros((9, 9))
    img[4, 4] = 0.3
    out = gradient_magnitude(img)
    assert out.max() == 1.0
    assert out.min() >= 0.0


def test_matches_loop_oracle():
    rng = np.random.default_rng(1)
    img = rng.random((12, 10))
    raw = gradient_magnitude(img, normalize=False)
    np.testing.assert_allclose(raw, oracles.sobel_magnitude(img), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_non_finite_rejected(bad):
    img = np.zeros((4, 4))
    img[1, 1] = bad
    with pytest.raises(InvalidImageError):
        gradient_magnitude(img)


def test_unknown_operator():
    with pytest.raises(ValueError):
        gradient_magnitude(np.zeros((4, 4)), operator="roberts")


@pytest.mark.parametrize("op", ["scharr", "central"])
def test_alternative_operators_are_normalized(op):
    img = np.random.default_rng(2).random((8, 8))
    out = gradient_magnitude(img, operator=op)
    assert out.max() == pytest.approx(1.0)


def test_scale_invariance_of_normalized_output():
    img = np.random.default_rng(3).random((16, 16))
    np.testing.assert_allclose(gradient_magnitude(2.5 * img), gradient_magnitude(img), rtol=1e-12, atol=0)


def test_translation_equivariance_in_interior():
    rng = np.random.default_rng(4)
    big = rng.random((24, 24))
    a = gradient_magnitude(big[2:18, 2:18], normalize=False)
    b = gradient_magnitude(big[3:19, 1:17], normalize=False)
    # interior rows/cols untouched by border replication
    np.testing.assert_allclose(a[2:14, 1:13], b[1:13, 2:14], rtol=1e-12)


def test_torch_gradient_matches_numpy():
    rng = np.random.default_rng(5)
    imgs = rng.random((3, 16, 16))
    imgs[1] = 0.25
    t = image_gradient(torch.as_tensor(imgs[:, None]))
    for k in range(3):
        np.testing.assert_allclose(t[k, 0].numpy(), gradient_magnitude(imgs[k]), rtol=1e-12, atol=1e-12)


def test_pyramid_sizes_512():
    pyr = build_pyramid(np.zeros((512, 512)), 5)
    assert [p.shape[0] for p in pyr] == [512, 256, 128, 64, 32]


def test_pyramid_hand_example():
    a = np.arange(1, 17).reshape(4, 4)
    pyr = build_pyramid(a, 2)
    assert pyr[0] is a or np.array_equal(pyr[0], a)
    np.testing.assert_array_equal(pyr[1], [[6, 8], [14, 16]])


def test_pyramid_constant():
    for level in build_pyramid(np.full((32, 32), 0.3), 5):
        assert np.all(level == 0.3)


def test_pyramid_indivisible():
    with pytest.raises(PyramidShapeError):
        build_pyramid(np.zeros((24, 24)), 5)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.sampled_from([4, 8, 16]), st.sampled_from([4, 8, 16])),
              elements=st.floats(0, 1, allow_nan=False)))
def test_pyramid_levels_are_block_maxima(a):
    pyr = build_pyramid(a, 3)
    for k in range(2):
        np.testing.assert_array_equal(pyr[k + 1], oracles.max_pool2(pyr[k]))
        assert pyr[k + 1].shape == (pyr[k].shape[0] // 2, pyr[k].shape[1] // 2)
