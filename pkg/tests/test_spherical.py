import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groundsynth.errors import DomainError, ParameterError
from groundsynth.spherical import (
    Panorama,
    PerspectiveSpec,
    angles_to_pano_pixel,
    direction_to_angles,
    pano_pixel_to_angles,
    standard_view_specs,
    perspective_ray,
    resample_perspective,
)


PANO = Panorama(np.zeros((1024, 2048, 3), dtype=np.uint8))


@pytest.fixture
def pano():
    return PANO


def brute_force_resample(pano, spec):
    """Per-pixel reference: ray -> angles -> pano pixel -> bilinear tap."""
    src = pano.pixels.astype(np.float64)
    h, w = pano.height_px, pano.width_px
    out = np.zeros((spec.height_px, spec.width_px) + src.shape[2:])
    for j in range(spec.height_px):
        for i in range(spec.width_px):
            theta, phi = direction_to_angles(perspective_ray(i, j, spec))
            u, v = angles_to_pano_pixel(float(theta), float(phi), pano)
            v = min(max(v, 0.0), h - 1.0)
            c0 = math.floor(u)
            r0 = math.floor(v)
            fu, fv = u - c0, v - r0
            c0 %= w
            c1 = (c0 + 1) % w
            r1 = min(r0 + 1, h - 1)
            out[j, i] = (
                (1 - fv) * ((1 - fu) * src[r0, c0] + fu * src[r0, c1])
                + fv * ((1 - fu) * src[r1, c0] + fu * src[r1, c1])
            )
    return out


def test_mid_panorama(pano):
    assert pano_pixel_to_angles(1023.5, 511.5, pano) == (180.0, 0.0)
    assert angles_to_pano_pixel(180.0, 0.0, pano) == (1023.5, 511.5)


def test_theta_wraps(pano):
    assert angles_to_pano_pixel(540.0, 0.0, pano) == angles_to_pano_pixel(180.0, 0.0, pano)


@pytest.mark.parametrize("u,v", [(-0.5, 10.0), (2048.0, 10.0), (5.0, -1e-9), (5.0, 1024.0)])
def test_out_of_range_pixel(pano, u, v):
    with pytest.raises(DomainError):
        pano_pixel_to_angles(u, v, pano)


def test_pixel_round_trip_10k(pano):
    rng = np.random.default_rng(0)
    us = rng.uniform(0, 2048, 10_000)
    vs = rng.uniform(0, 1024, 10_000)
    for u, v in zip(us, vs):
        u2, v2 = angles_to_pano_pixel(*pano_pixel_to_angles(u, v, pano), pano)
        assert abs(u2 - u) <= 1e-9 and abs(v2 - v) <= 1e-9


@given(
    theta=st.floats(0.0, 360.0, exclude_max=True),
    phi=st.floats(-90.0 + 180.0 / 1024, 90.0 - 0.5 * 180.0 / 1024),
)
def test_angle_round_trip(theta, phi):
    pano = PANO
    u, v = angles_to_pano_pixel(theta, phi, pano)
    t2, p2 = pano_pixel_to_angles(u, v, pano)
    dt = (t2 - theta + 180.0) % 360.0 - 180.0
    # 1e-9 px expressed in degrees
    assert abs(dt) <= 1e-9 * 360 / 2048
    assert abs(p2 - phi) <= 1e-9 * 180 / 1024


def test_panorama_invariants():
    with pytest.raises(ParameterError):
        Panorama(np.zeros((10, 30)))
    with pytest.raises(ParameterError):
        Panorama(np.zeros((10, 20)), heading_deg=360.0)


@pytest.mark.parametrize("fov", [0.0, 180.0, -5.0])
def test_spec_rejects_bad_fov(fov):
    with pytest.raises(ParameterError):
        PerspectiveSpec(0.0, 0.0, fov, 10, 10)


@given(
    theta=st.floats(0, 359.9),
    phi=st.floats(-90, 90),
    fov=st.floats(1.0, 179.0),
    i=st.floats(0, 63.99),
    j=st.floats(0, 47.99),
)
def test_rays_are_unit(theta, phi, fov, i, j):
    spec = PerspectiveSpec(theta, phi, fov, 48, 64)
    d = perspective_ray(i, j, spec)
    assert abs(np.linalg.norm(d) - 1.0) < 1e-12


@given(theta=st.floats(0, 359.9), phi=st.floats(-89.0, 89.0))
def test_center_ray_is_view_axis(theta, phi):
    spec = PerspectiveSpec(theta, phi, 75.0, 256, 256)
    t, p = direction_to_angles(perspective_ray(127.5, 127.5, spec))
    assert abs((t - theta + 180) % 360 - 180) < 1e-9
    assert abs(p - phi) < 1e-9


def test_pole_view_points_up():
    spec = PerspectiveSpec(0.0, 90.0, 75.0, 256, 256)
    d = perspective_ray(127.5, 127.5, spec)
    assert np.allclose(d, [0.0, 1.0, 0.0], atol=1e-15)


def test_corner_ray_offset():
    spec = PerspectiveSpec(33.0, 21.0, 75.0, 256, 256)
    f = 128.0 / math.tan(math.radians(37.5))
    expected = math.atan(math.sqrt(2) * 127.5 / f)
    axis = perspective_ray(127.5, 127.5, spec)
    for i, j in [(0, 0), (255, 0), (0, 255), (255, 255)]:
        d = perspective_ray(i, j, spec)
        angle = math.acos(np.clip(np.dot(axis, d), -1, 1))
        assert abs(angle - expected) < 1e-9


def test_perspective_ray_domain():
    spec = PerspectiveSpec(0, 0, 75, 16, 16)
    with pytest.raises(DomainError):
        perspective_ray(16, 0, spec)


def test_standard_views_shapes():
    rng = np.random.default_rng(1)
    pano = Panorama(rng.integers(0, 256, (1024, 2048, 3), dtype=np.uint8))
    specs = standard_view_specs()
    assert [s.theta_deg for s in specs.values()] == [60, 120, 240, 300]
    for spec in specs.values():
        out = resample_perspective(pano, spec)
        assert out.shape == (256, 256, 3) and out.dtype == np.uint8


def test_constant_panorama_stays_constant():
    pano = Panorama(np.full((64, 128, 3), (12, 200, 77), dtype=np.uint8))
    for spec in [PerspectiveSpec(0, 0, 90, 20, 30), PerspectiveSpec(359, -80, 170, 9, 9)]:
        out = resample_perspective(pano, spec)
        assert (out == np.array([12, 200, 77], dtype=np.uint8)).all()


def test_bright_pixel_lands_at_center():
    pix = np.zeros((1024, 2048), dtype=np.float64)
    u, v = angles_to_pano_pixel(60.0, 15.0, Panorama(pix))
    pix[round(v), round(u)] = 1.0
    pano = Panorama(pix)
    spec = PerspectiveSpec(60.0, 15.0, 75.0, 256, 256)
    out = resample_perspective(pano, spec)
    j, i = np.unravel_index(np.argmax(out), out.shape)
    assert abs(i - 127.5) <= 1.0 and abs(j - 127.5) <= 1.0


def test_matches_brute_force_resampler():
    rng = np.random.default_rng(5)
    pano = Panorama(rng.random((32, 64, 3)))
    for spec in [PerspectiveSpec(355.0, 15.0, 75.0, 12, 16), PerspectiveSpec(120.0, -60.0, 100.0, 10, 10)]:
        np.testing.assert_allclose(resample_perspective(pano, spec), brute_force_resample(pano, spec), atol=1e-9)


def test_seam_continuity():
    rows = np.linspace(0, 255, 512).astype(np.uint8)
    pano = Panorama(np.repeat(rows[:, None], 1024, axis=1))
    at_seam = resample_perspective(pano, PerspectiveSpec(0.0, 10.0, 75.0, 64, 64))
    away = resample_perspective(pano, PerspectiveSpec(180.0, 10.0, 75.0, 64, 64))
    assert np.array_equal(at_seam, away)
    # The view is mirror-symmetric about its vertical axis, seam included.
    assert np.array_equal(at_seam, at_seam[:, ::-1])


@settings(max_examples=20, deadline=None)
@given(k=st.integers(-3000, 3000), theta_px=st.integers(0, 2047))
def test_whole_column_rotation_is_bit_exact(k, theta_px):
    rng = np.random.default_rng(2)
    pix = rng.integers(0, 256, (128, 256, 3), dtype=np.uint8)
    col = 360.0 / 256
    base = PerspectiveSpec((theta_px % 256) * col, 5.0, 60.0, 24, 24)
    rotated = PerspectiveSpec(((theta_px % 256) * col + k * col) % 360.0, 5.0, 60.0, 24, 24)
    a = resample_perspective(Panorama(pix), base)
    b = resample_perspective(Panorama(np.roll(pix, k, axis=1)), rotated)
    assert np.array_equal(a, b)


def test_heading_relative_sampling():
    rng = np.random.default_rng(3)
    pix = rng.random((64, 128))
    spec = PerspectiveSpec(100.0, 0.0, 60.0, 8, 8)
    north = resample_perspective(Panorama(pix, heading_deg=30.0), spec, relative_to_heading=True)
    direct = resample_perspective(Panorama(pix), PerspectiveSpec(70.0, 0.0, 60.0, 8, 8))
    np.testing.assert_allclose(north, direct, atol=1e-12)
