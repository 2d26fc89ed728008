import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from burstcat.optical_flow import (
    FlowParams,
    average_flow_images,
    burst_flow_images,
    estimate_flow,
    flow_to_rgb,
    poly_expand,
    rgb_to_hsv,
)
from burstcat.tensor_core import DimensionError

from .helpers import shifted_pair, smooth_texture


def dense_wls_fit(img, row, col, poly_n=5, sigma=1.2):
    """Brute-force weighted least squares on the in-image part of one window."""
    r = poly_n // 2
    rows, rhs, weights = [], [], []
    for ty in range(-r, r + 1):
        for tx in range(-r, r + 1):
            y, x = row + ty, col + tx
            if 0 <= y < img.shape[0] and 0 <= x < img.shape[1]:
                rows.append([1, tx, ty, tx * tx, ty * ty, tx * ty])
                rhs.append(img[y, x])
                weights.append(np.exp(-(tx * tx + ty * ty) / (2 * sigma**2)))
    X = np.array(rows, float)
    sw = np.sqrt(np.array(weights))
    coef, *_ = np.linalg.lstsq(X * sw[:, None], np.array(rhs) * sw, rcond=None)
    return coef


def quadratic_image(h, w, c, bx, by, axx, ayy, axy):
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    return c + bx * xx + by * yy + axx * xx**2 + ayy * yy**2 + 2 * axy * xx * yy


def local_coeffs(c, bx, by, axx, ayy, axy, row, col):
    """Coefficients of the same quadratic re-centred at (row, col)."""
    x0, y0 = col, row
    return np.array([
        c + bx * x0 + by * y0 + axx * x0**2 + ayy * y0**2 + 2 * axy * x0 * y0,
        bx + 2 * axx * x0 + 2 * axy * y0,
        by + 2 * ayy * y0 + 2 * axy * x0,
        axx, ayy, 2 * axy,
    ])


def test_constant_image():
    r = poly_expand(np.full((12, 12), 0.7)).coeffs
    interior = r[2:-2, 2:-2]
    np.testing.assert_allclose(interior[..., 0], 0.7, atol=1e-12)
    np.testing.assert_allclose(interior[..., 1:], 0.0, atol=1e-12)


def test_ramp_matches_oracle():
    img = quadratic_image(16, 16, 0, 0.01, 0, 0, 0, 0)
    pe = poly_expand(img)
    for row, col in [(5, 5), (8, 11), (2, 13)]:
        np.testing.assert_allclose(pe.coeffs[row, col], dense_wls_fit(img, row, col), atol=1e-10)
    np.testing.assert_allclose(pe.b[2:-2, 2:-2, 0], 0.01, atol=1e-12)
    np.testing.assert_allclose(pe.b[2:-2, 2:-2, 1], 0.0, atol=1e-12)
    np.testing.assert_allclose(pe.A[2:-2, 2:-2], 0.0, atol=1e-12)


def test_pure_x_squared():
    a = 0.003
    pe = poly_expand(quadratic_image(14, 14, 0, 0, 0, a, 0, 0))
    A = pe.A[2:-2, 2:-2]
    np.testing.assert_allclose(A[..., 0, 0], a, atol=1e-6)
    np.testing.assert_allclose(A[..., 0, 1], 0, atol=1e-6)
    np.testing.assert_allclose(A[..., 1, 1], 0, atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.01, 0.01), min_size=6, max_size=6), st.sampled_from([(5, 1.2), (7, 1.5)]))
def test_quadratics_recovered_everywhere(coefs, window):
    poly_n, sigma = window
    h, w = 13, 11
    img = quadratic_image(h, w, *coefs)
    pe = poly_expand(img, poly_n, sigma)
    for row in range(h):
        for col in range(w):
            expect = local_coeffs(*coefs, row, col)
            assert np.max(np.abs(pe.coeffs[row, col] - expect)) <= 1e-6
    np.testing.assert_allclose(pe.A[..., 0, 1], pe.A[..., 1, 0])


def test_poly_expand_errors():
    with pytest.raises(DimensionError):
        poly_expand(np.zeros((3, 10)), 5)
    with pytest.raises(DimensionError):
        poly_expand(np.zeros((6, 6, 3)))


def test_identical_frames_give_zero_flow():
    img = smooth_texture((64, 64), 3)
    assert np.abs(estimate_flow(img, img)).max() <= 1e-3


@pytest.mark.parametrize("shift", [(3, 0), (-2, 1)])
def test_translation_recovered(shift):
    dx, dy = shift
    a, b = shifted_pair(128, dx, dy, seed=11)
    flow = estimate_flow(a, b)
    assert abs(np.median(flow[..., 0]) - dx) <= 0.3
    assert abs(np.median(flow[..., 1]) - dy) <= 0.3
    assert np.hypot(flow[..., 0] - dx, flow[..., 1] - dy).mean() <= 0.5


def test_flow_antisymmetry():
    for seed, (dx, dy) in enumerate([(2, 1), (-3, 0), (1, -2)]):
        a, b = shifted_pair(64, dx, dy, seed=seed)
        fwd = estimate_flow(a, b)
        bwd = estimate_flow(b, a)
        dev = np.hypot(*(fwd + bwd).reshape(-1, 2).T)
        assert np.median(dev) <= 0.5


def test_flow_shape_mismatch():
    with pytest.raises(DimensionError):
        estimate_flow(np.zeros((16, 16)), np.zeros((16, 17)))


def test_flow_params_validation():
    with pytest.raises(ValueError):
        FlowParams(window=4)
    with pytest.raises(ValueError):
        FlowParams(poly_n=1)
    with pytest.raises(ValueError):
        FlowParams(levels=0)


def test_zero_flow_renders_black():
    assert np.all(flow_to_rgb(np.zeros((5, 6, 2))) == 0)


def test_uniform_flow_at_cap_is_pure_red():
    cap = 8.0
    rgb = flow_to_rgb(np.tile([cap, 0.0], (4, 4, 1)), cap)
    np.testing.assert_allclose(rgb, np.tile([1.0, 0.0, 0.0], (4, 4, 1)), atol=1e-12)


def test_opposite_flows_have_opposite_hues():
    rgb = flow_to_rgb(np.array([[[3.0, 0.0], [-3.0, 0.0]]]), 8.0)
    hue = rgb_to_hsv(rgb)[0, :, 0]
    assert abs(((hue[1] - hue[0]) % 1.0) - 0.5) < 1e-9


def test_flow_to_rgb_rejects_nan():
    with pytest.raises(FloatingPointError):
        flow_to_rgb(np.array([[[np.nan, 0.0]]]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.5, 20))
def test_flow_rgb_range(seed, scale):
    flow = np.random.default_rng(seed).normal(0, scale, (6, 7, 2))
    rgb = flow_to_rgb(flow)
    assert rgb.min() >= 0 and rgb.max() <= 1


def test_average_flow_images():
    a = np.full((3, 3, 3), 0.4)
    b = np.zeros((3, 3, 3))
    np.testing.assert_allclose(average_flow_images(a, b), 0.2)
    np.testing.assert_array_equal(average_flow_images(a, a), a)
    p = np.array([[[0.2, 0.8, 0.0]]])
    q = np.array([[[0.6, 0.0, 1.0]]])
    np.testing.assert_allclose(average_flow_images(p, q), [[[0.4, 0.4, 0.5]]])
    np.testing.assert_array_equal(average_flow_images(p, q), average_flow_images(q, p))
    with pytest.raises(DimensionError):
        average_flow_images(a, np.zeros((3, 4, 3)))


def _blob_burst(moves, size=64, seed=0):
    bg = smooth_texture((size, size), seed, sigma=3) * 0.3
    yy, xx = np.mgrid[0:size, 0:size]
    cx, cy = 24.0, 24.0
    frames = []
    centers = [(cx, cy)]
    for mx, my in moves:
        cx, cy = cx + mx, cy + my
        centers.append((cx, cy))
    for cx, cy in centers:
        blob = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * 4.0**2))
        frames.append(np.clip(bg + 0.6 * blob, 0, 1))
    return frames, centers


def _patch_hue(rgb, center):
    cx, cy = center
    patch = rgb[int(cy) - 3 : int(cy) + 4, int(cx) - 3 : int(cx) + 4]
    hsv = rgb_to_hsv(patch)
    ang = hsv[..., 0] * 2 * np.pi
    return np.angle(np.sum(hsv[..., 2] * np.exp(1j * ang))) / (2 * np.pi) % 1.0


def test_static_burst_flow_images_black():
    img = smooth_texture((32, 32), 1)
    f12, f23, avg = burst_flow_images((img, img, img))
    assert f12.max() < 1e-3 and f23.max() < 1e-3 and avg.max() < 1e-3


def test_translating_blob_matching_hues():
    frames, centers = _blob_burst([(2, 0), (2, 0)])
    f12, f23, _ = burst_flow_images(frames)
    h12 = _patch_hue(f12, centers[1])
    h23 = _patch_hue(f23, centers[1])
    assert min(abs(h12 - h23), 1 - abs(h12 - h23)) < 15 / 360
    assert min(h12, 1 - h12) < 15 / 360  # motion along +x is hue 0
    assert f12[int(centers[1][1]), int(centers[1][0])].max() > 0.1


def test_turning_blob_hues_differ_by_quarter_turn():
    frames, centers = _blob_burst([(2, 0), (0, 2)])
    f12, f23, _ = burst_flow_images(frames)
    h12 = _patch_hue(f12, centers[1])
    h23 = _patch_hue(f23, centers[1])
    assert abs(((h23 - h12) % 1.0) - 0.25) < 15 / 360
