import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stereoslam.dataset import load_kitti_sequence, read_trajectory
from stereoslam.geometry import Isometry3, triangulate
from stereoslam.synthworld import (Scene, SceneSpec, SplitMix64, _stamp_codes, export_kitti,
                                   generate_scene, parse_scene_spec, render_frame, splitmix64)

MASK = (1 << 64) - 1


def reference_splitmix(seed, n):
    state, out = seed & MASK, []
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


def test_splitmix_known_values():
    assert [int(v) for v in splitmix64(0, np.arange(2))] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4]


@given(st.integers(0, MASK))
def test_splitmix_matches_sequential_generator(seed):
    rng = SplitMix64(seed)
    got = [int(v) for v in rng.uint64(5)] + [int(v) for v in rng.uint64(3)]
    assert got == reference_splitmix(seed, 8)


def test_uniform_and_normal_moments():
    rng = SplitMix64(1)
    u = rng.uniform(100_000)
    z = rng.normal(100_001)
    assert u.min() >= 0.0 and u.max() < 1.0 and abs(u.mean() - 0.5) < 0.01
    assert len(z) == 100_001 and abs(z.mean()) < 0.02 and abs(z.std() - 1.0) < 0.02


def test_same_seed_same_scene():
    a = generate_scene(SceneSpec(seed=9, trajectory="turns", length=50, point_count=300))
    b = generate_scene(SceneSpec(seed=9, trajectory="turns", length=50, point_count=300))
    assert np.array_equal(a.points, b.points) and a.descriptors == b.descriptors
    assert all(np.array_equal(p.matrix(), q.matrix()) for p, q in zip(a.poses, b.poses))
    ra, rb = render_frame(a, 3), render_frame(b, 3)
    assert ra.keypoints_L == rb.keypoints_L and np.array_equal(ra.labels, rb.labels)
    c = generate_scene(SceneSpec(seed=10, trajectory="turns", length=50, point_count=300))
    assert not np.array_equal(a.points, c.points)


@pytest.mark.parametrize("laps", [1, 2])
def test_loop_closes(laps):
    scene = generate_scene(SceneSpec(trajectory="loop", length=300, laps=laps, point_count=10))
    assert np.allclose(scene.poses[0].matrix(), scene.poses[-1].matrix(), atol=1e-9)
    mid = scene.poses[len(scene.poses) // (2 * laps)]
    assert np.linalg.norm(mid.translation) > 10.0


def test_straight_poses():
    scene = generate_scene(SceneSpec(length=100, speed=10, rate=10, point_count=10))
    assert len(scene.poses) == 101
    steps = np.diff([p.translation for p in scene.poses], axis=0)
    assert np.allclose(np.linalg.norm(steps, axis=1), 1.0, atol=1e-12)
    assert np.allclose(scene.timestamps[:3], [0.0, 0.1, 0.2])


def test_turns_path_has_unit_steps():
    scene = generate_scene(SceneSpec(trajectory="turns", length=400, point_count=10))
    steps = np.linalg.norm(np.diff([p.translation for p in scene.poses], axis=0), axis=1)
    assert np.allclose(steps, 1.0, atol=1e-3)
    headings = [math.atan2(p.rotation[0, 2], p.rotation[2, 2]) for p in scene.poses]
    assert max(headings) == pytest.approx(math.pi / 2, abs=1e-6)


def _single_point_scene(z, **spec):
    spec = SceneSpec(point_count=1, **spec)
    return Scene(spec, np.array([[0.0, 0.0, z]]), [Isometry3.identity()], [0xABC], _stamp_codes(1))


def test_optical_axis_point():
    scene = _single_point_scene(20.0)
    f = render_frame(scene, 0)
    rig = scene.spec.rig()
    (kl,), (kr,) = f.keypoints_L, f.keypoints_R
    assert (kl.r, kl.c) == (pytest.approx(rig.cam_L.cy), pytest.approx(rig.cam_L.cx))
    assert kr.r == kl.r and kr.c == pytest.approx(kl.c - rig.B / 20.0, abs=1e-12)
    assert kl.d == kr.d == 0xABC


@pytest.mark.parametrize("seed", range(3))
def test_render_triangulate_round_trip(seed):
    scene = generate_scene(SceneSpec(seed=seed, trajectory="arc", length=30, point_count=2000))
    rig = scene.spec.rig()
    f = render_frame(scene, 5)
    truth = scene.poses[5].inverse() @ scene.points[f.labels]
    for kl, kr, p in zip(f.keypoints_L, f.keypoints_R, truth):
        assert np.allclose(triangulate(kl, kr, rig), p, rtol=1e-9, atol=1e-9)


def test_outlier_fraction():
    scene = generate_scene(SceneSpec(seed=4, point_count=10_000, outlier_fraction=0.3))
    flags = []
    k = 0
    while len(flags) < 10_000:
        flags.extend(render_frame(scene, k).outlier.tolist())
        k += 1
    assert abs(np.mean(flags) - 0.3) <= 0.02


@settings(max_examples=15)
@given(st.integers(0, 1000), st.sampled_from(["straight", "arc", "loop", "turns"]),
       st.floats(0.0, 2.0), st.floats(0.0, 0.5), st.booleans())
def test_keypoints_inside_image(seed, kind, sigma, outliers, quantize):
    spec = SceneSpec(seed=seed, trajectory=kind, length=200, point_count=1500,
                     noise_sigma=sigma, outlier_fraction=outliers, quantize=quantize)
    scene = generate_scene(spec)
    f = render_frame(scene, seed % len(scene.poses))
    for kl, kr in zip(f.keypoints_L, f.keypoints_R):
        for k in (kl, kr):
            assert 0 <= k.r <= spec.height - 1 and 0 <= k.c <= spec.width - 1
        assert kl.r == kr.r and kr.c < kl.c
        if quantize:
            assert kl.r == int(kl.r) and kl.c == int(kl.c)


def test_images_carry_stamps():
    scene = generate_scene(SceneSpec(seed=2, length=20, point_count=500))
    f = render_frame(scene, 0, images=True)
    assert f.image_L.dtype == np.uint8 and f.image_L.shape == (376, 1241)
    for kl in f.keypoints_L[:20]:
        assert f.image_L[int(round(kl.r)), int(round(kl.c))] in (255,) + tuple(range(60, 200))
    assert render_frame(scene, 0).image_L is None


def test_occlusion_removes_hidden_points():
    spec = SceneSpec(point_count=2)
    scene = Scene(spec, np.array([[0.0, 0.0, 10.0], [0.0, 0.0, 20.0]]), [Isometry3.identity()],
                  [1, 2], _stamp_codes(2))
    assert len(render_frame(scene, 0).keypoints_L) == 2
    occluded = Scene(SceneSpec(point_count=2, occlusion=True), scene.points, scene.poses,
                     scene.descriptors, scene.codes)
    assert render_frame(occluded, 0).labels.tolist() == [0]


def test_sampler_finds_nearby_keypoint():
    scene = generate_scene(SceneSpec(seed=3, length=20, point_count=500))
    f = render_frame(scene, 0)
    k = f.keypoints_L[0]
    assert f.sampler(k.r + 0.4, k.c - 0.3) == (k.r, k.c, k.d)
    assert f.sampler(-50.0, -50.0) is None


def test_spec_parsing_and_validation():
    spec = parse_scene_spec("seed = 3\ntrajectory = loop  # comment\nlaps = 2\nquantize = yes\n")
    assert (spec.seed, spec.trajectory, spec.laps, spec.quantize) == (3, "loop", 2, True)
    for text in ("bogus = 1", "seed 3", "seed = x", "trajectory = spiral", "point_count = 0",
                 "outlier_fraction = 1.0", "noise_sigma = -1"):
        with pytest.raises(ValueError):
            parse_scene_spec(text)


def test_export_round_trip(tmp_path):
    scene = generate_scene(SceneSpec(seed=1, length=10, point_count=300))
    out = export_kitti(scene, tmp_path / "seq", stop=4)
    m = load_kitti_sequence(out)
    assert len(m) == 4 and np.allclose(m.timestamps, [0.0, 0.1, 0.2, 0.3])
    assert m.rig.B == pytest.approx(scene.spec.rig().B, rel=1e-15)
    left, right = m.load_pair(1)
    f = render_frame(scene, 1, images=True)
    assert np.array_equal(left, f.image_L) and np.array_equal(right, f.image_R)
    for a, b in zip(read_trajectory(out / "poses.txt"), scene.poses):
        assert np.array_equal(a.matrix(), b.matrix())
