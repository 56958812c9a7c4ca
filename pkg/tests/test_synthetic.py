from dataclasses import replace

import numpy as np
import pytest

from mssplat.errors import InvalidInputError
from mssplat.pyramid import build_gt_pyramid
from mssplat.synthetic import (
    SyntheticSpec,
    box_downsample,
    field_gaussians,
    generate_synthetic_scene,
    render_ground_truth,
)


def high_band_energy(img):
    gray = img.mean(axis=2)
    spec = np.abs(np.fft.fftshift(np.fft.fft2(gray - gray.mean()))) ** 2
    h, w = gray.shape
    fy, fx = np.meshgrid(np.fft.fftshift(np.fft.fftfreq(h)), np.fft.fftshift(np.fft.fftfreq(w)), indexing="ij")
    return spec[np.hypot(fx, fy) > 0.25].sum()


def test_checkerboard_counts_and_rings():
    spec = SyntheticSpec(n_cameras=8)
    ds, images = generate_synthetic_scene(spec)
    assert len(images) == 8 and all(img.shape == (64, 64, 3) for img in images.values())
    dists = sorted({round(float(np.linalg.norm(c.center)), 6) for c in ds.cameras})
    assert dists == list(spec.ring_radii)


def test_far_ring_supersampling_cuts_high_band_energy():
    spec = SyntheticSpec(n_cameras=8)
    ds, images = generate_synthetic_scene(spec)
    far = [c for c in ds.cameras if np.isclose(np.linalg.norm(c.center), max(spec.ring_radii))]
    assert far
    for cam in far:
        naive = render_ground_truth(cam, spec, supersample=1)
        assert high_band_energy(images[cam.id]) / high_band_energy(naive) < 1


def test_single_gaussian_field_brightest_at_principal_point():
    spec = SyntheticSpec(family="gaussian-field", n_cameras=3, width=33, height=33, focal=40.0,
                         n_field_gaussians=1, field_scale_range=(0.2, 0.2))
    assert np.ptp(np.exp(field_gaussians(spec).log_scale)) == 0
    ds, images = generate_synthetic_scene(spec)
    for cam in ds.cameras:
        lum = images[cam.id].sum(axis=2)
        assert np.unravel_index(np.argmax(lum), lum.shape) == (16, 16)
        assert (cam.cx, cam.cy) == (16.0, 16.0)


def test_two_walls_nearest_depth_is_first_wall():
    spec = SyntheticSpec(family="synth_walls", n_cameras=5, wall_depths=(1.5, 4.0))
    ds, _ = generate_synthetic_scene(spec)
    for cam in ds.cameras:
        uv, z = cam.project(ds.points.positions)
        inside = (z > 0) & np.all((uv >= -0.5) & (uv < [cam.width - 0.5, cam.height - 0.5]), axis=1)
        assert z[inside].min() == 1.5


def test_unknown_family():
    with pytest.raises(InvalidInputError):
        generate_synthetic_scene(SyntheticSpec(family="teapot"))


def test_generation_is_seeded():
    a, _ = generate_synthetic_scene(SyntheticSpec(n_cameras=4, width=16, height=16))
    b, _ = generate_synthetic_scene(SyntheticSpec(n_cameras=4, width=16, height=16))
    np.testing.assert_array_equal(a.points.positions, b.points.positions)
    c, _ = generate_synthetic_scene(SyntheticSpec(n_cameras=4, width=16, height=16, seed=1))
    assert not np.array_equal(a.points.positions, c.points.positions)


def test_box_downsample_means_blocks():
    img = np.arange(16, dtype=float).reshape(4, 4, 1)
    np.testing.assert_array_equal(box_downsample(img, 2)[..., 0], [[2.5, 4.5], [10.5, 12.5]])
    assert box_downsample(img, 1) is img


# Cascaded sigma=1 blurs give level l an effective footprint about twice as wide
# as the box filter of a direct supersampled render, so scenes dominated by
# hard high-contrast edges land at 0.05-0.08 instead of under 0.05.
WIDE_PREFILTER = pytest.mark.xfail(strict=True, reason="pyramid blur is wider than the box prefilter on hard edges")


@pytest.mark.parametrize("family", [
    pytest.param("checkerboard-plane", marks=WIDE_PREFILTER),
    pytest.param("two-walls", marks=WIDE_PREFILTER),
    "gaussian-field",
])
def test_pyramid_levels_track_direct_supersampled_render(family):
    spec = SyntheticSpec(family=family, n_cameras=4)
    ds, images = generate_synthetic_scene(spec)
    gaussians = field_gaussians(spec) if family == "gaussian-field" else None
    for cam in ds.cameras:
        pyr = build_gt_pyramid(images[cam.id], 4)
        for lvl in range(1, len(pyr)):
            direct = render_ground_truth(cam.at_level(lvl), spec, gaussians=gaussians)
            assert np.abs(pyr.levels[lvl] - direct).mean(axis=(0, 1)).max() < 0.05


def test_supersampled_camera_pixel_blocks_align():
    spec = SyntheticSpec(n_cameras=1, width=20, height=14)
    ds, _ = generate_synthetic_scene(spec)
    cam = ds.cameras[0]
    hi = cam.supersampled(4)
    # the centre of fine block (x, y) projects to the coarse pixel centre
    pt = np.array([[0.3, -0.2, 0.0]])
    uv, _ = cam.project(pt)
    uv_hi, _ = hi.project(pt)
    np.testing.assert_allclose((uv_hi + 0.5) / 4 - 0.5, uv, atol=1e-12)
    assert replace(cam) == cam
