import numpy as np
import pytest

from stereoslam.geometry import Isometry3, se3_exp, se3_log, stereo_jacobians
from stereoslam.model import Frame, Framepoint, KeypointWD
from stereoslam.synthworld import SceneSpec, generate_scene, render_frame
from stereoslam.tracker import (TrackerConfig, linearize, match_projections, optimize_pose,
                                predict_motion)

from conftest import linked_frame_pair


@pytest.fixture(scope="module")
def scene():
    return generate_scene(SceneSpec(seed=11, length=10, point_count=1500))


def pose_error(T_w2c, truth_c2w):
    e = se3_log(T_w2c @ truth_c2w)
    return np.linalg.norm(e[:3]), np.linalg.norm(e[3:])


def test_prior_without_history_is_previous_pose():
    T = se3_exp([1, 2, 3, 0.1, 0.2, 0.3])
    assert predict_motion(T) is T


def test_prior_of_identity_poses():
    T = predict_motion(Isometry3.identity(), Isometry3.identity())
    assert np.allclose(T.matrix(), np.eye(4), atol=0)


def test_constant_velocity_prior():
    c2w_prevprev = Isometry3.identity()
    c2w_prev = Isometry3.from_translation([1.0, 0.0, 0.0])
    pred = predict_motion(c2w_prev.inverse(), c2w_prevprev.inverse()).inverse()
    assert np.allclose(pred.translation, [2.0, 0.0, 0.0], atol=1e-12)
    assert np.allclose(pred.rotation, np.eye(3), atol=1e-12)


def _frame_from_rendered(rf, rig, pose):
    from stereoslam.geometry import triangulate
    frame = Frame(rf.index, rig, pose)
    for kl, kr in zip(rf.keypoints_L, rf.keypoints_R):
        p = triangulate(kl, kr, rig)
        frame.points.append(Framepoint(kl, kr, p, pose @ p))
    return frame


def test_zero_motion_matches_every_point(scene):
    rf = render_frame(scene, 3)
    prev = _frame_from_rendered(rf, scene.spec.rig(), scene.poses[3])
    matches, unmatched = match_projections(prev, rf.keypoints_L, scene.poses[3].inverse())
    assert not unmatched
    assert all(prev.points[k] is fp for k, (fp, _) in enumerate(matches))
    assert [j for _, j in matches] == list(range(len(rf.keypoints_L)))


def test_prior_outside_image_matches_nothing(scene):
    rf = render_frame(scene, 3)
    prev = _frame_from_rendered(rf, scene.spec.rig(), scene.poses[3])
    far = Isometry3.from_translation([5000.0, 0.0, 0.0]) @ scene.poses[3].inverse()
    matches, unmatched = match_projections(prev, rf.keypoints_L, far)
    assert matches == [] and len(unmatched) == len(prev.points)


def test_projection_matching_is_correct_on_known_motion(scene):
    a, b = render_frame(scene, 4), render_frame(scene, 6)
    prev = _frame_from_rendered(a, scene.spec.rig(), scene.poses[4])
    label_of = dict(zip(map(id, prev.points), a.labels.tolist()))
    matches, _ = match_projections(prev, b.keypoints_L, scene.poses[6].inverse())
    covisible = set(a.labels.tolist()) & set(b.labels.tolist())
    correct = sum(label_of[id(fp)] == b.labels[j] for fp, j in matches)
    assert correct >= 0.95 * len(covisible)


def test_ground_truth_prior_is_a_fixed_point(scene):
    prev, curr = linked_frame_pair(scene, 4, 5)
    truth = scene.poses[5].inverse()
    T, inliers = optimize_pose(curr, truth)
    assert np.allclose(T.matrix(), truth.matrix(), atol=1e-10)
    assert inliers == sum(fp.prev is not None for fp in curr.points)


def test_perturbed_prior_converges(scene):
    rng = np.random.default_rng(2)
    prev, curr = linked_frame_pair(scene, 4, 5)
    d = np.concatenate([rng.normal(size=3), rng.normal(size=3)])
    d[:3] *= 0.1 / np.linalg.norm(d[:3])
    d[3:] *= 0.02 / np.linalg.norm(d[3:])
    T, _ = optimize_pose(curr, se3_exp(d) @ scene.poses[5].inverse())
    t_err, r_err = pose_error(T, scene.poses[5])
    assert t_err < 1e-5 and r_err < 1e-6


def _with_gross_outlier(scene, index):
    _, curr = linked_frame_pair(scene, 4, 5)
    linked = sorted((fp for fp in curr.points if fp.prev is not None), key=lambda fp: fp.p_c[2])
    curr.points = linked[:100]
    bad = curr.points[index]
    bad.k_L = KeypointWD(bad.k_L.r + 60.0, bad.k_L.c + 150.0, 0.0, bad.k_L.d)
    bad.k_R = KeypointWD(bad.k_R.r + 60.0, bad.k_R.c + 150.0, 0.0, bad.k_R.d)
    return curr, bad


SMALL_OFFSET = [0.006, -0.005, 0.006, 0.001, -0.001, 0.001]


@pytest.mark.parametrize("index", [0, 10, 50, 99])
def test_gross_outlier_dropped(scene, index):
    curr, bad = _with_gross_outlier(scene, index)
    prior = se3_exp(SMALL_OFFSET) @ scene.poses[5].inverse()
    T, inliers = optimize_pose(curr, prior, TrackerConfig(ignore_outliers=True))
    t_err, _ = pose_error(T, scene.poses[5])
    assert t_err < 1e-4
    assert not bad.inlier and inliers == 99


@pytest.mark.parametrize("index", [0, 10, 50, 99])
def test_gross_outlier_down_weighted(scene, index):
    # the scaled kernel keeps a residual pull of order kernel/|e| on the outlier
    curr, bad = _with_gross_outlier(scene, index)
    prior = se3_exp(SMALL_OFFSET) @ scene.poses[5].inverse()
    T, inliers = optimize_pose(curr, prior)
    t_err, _ = pose_error(T, scene.poses[5])
    assert t_err < 5e-3
    assert not bad.inlier and inliers == 99


def test_far_points_do_not_touch_translation_block(scene):
    prev, curr = linked_frame_pair(scene, 4, 5)
    cfg = TrackerConfig()
    truth = scene.poses[5].inverse()
    points = [fp for fp in curr.points if fp.prev is not None]
    z = (truth @ np.array([fp.prev.p_w for fp in points]))[:, 2]
    far = [fp for fp, depth in zip(points, z) if cfg.close_depth <= depth < cfg.maximum_depth]
    assert far
    H, b, _, _, used = linearize(curr, truth, cfg, far)
    assert used.all()
    assert np.all(H[:3, :] == 0.0) and np.all(H[:, :3] == 0.0) and np.all(b[:3] == 0.0)
    assert np.any(H[3:, 3:] != 0.0)


def test_points_beyond_maximum_depth_carry_no_weight(scene):
    prev, curr = linked_frame_pair(scene, 4, 5)
    cfg = TrackerConfig(close_depth=2.0, maximum_depth=3.0)
    H, b, chi2, err2, used = linearize(curr, scene.poses[5].inverse(), cfg)
    assert np.isfinite(err2).all()
    assert np.count_nonzero(used) < len(used)


def test_inlier_flags_follow_final_error(scene):
    prev, curr = linked_frame_pair(scene, 4, 5)
    cfg = TrackerConfig()
    for k, fp in enumerate(curr.points[::7]):
        fp.k_L = KeypointWD(fp.k_L.r + k % 5, fp.k_L.c + 3 * (k % 4), 0.0, fp.k_L.d)
    T, inliers = optimize_pose(curr, scene.poses[4].inverse(), cfg)
    points = [fp for fp in curr.points if fp.prev is not None]
    _, _, _, err2, _ = linearize(curr, T, cfg, points)
    # flags come from the last iteration, evaluated just before the last update
    flags = [fp.inlier for fp in points]
    assert inliers == sum(flags)
    assert sum(e <= cfg.kernel_maximum_error for e in err2) == pytest.approx(inliers, abs=2)


def test_weighted_error_does_not_increase(scene):
    prev, curr = linked_frame_pair(scene, 4, 5)
    cfg = TrackerConfig()
    prior = se3_exp([0.05, -0.03, 0.08, 0.01, -0.01, 0.005]) @ scene.poses[5].inverse()
    chi_before = linearize(curr, prior, cfg)[2]
    T, _ = optimize_pose(curr, prior, cfg)
    assert linearize(curr, T, cfg)[2] <= chi_before


def test_optimize_pose_is_deterministic(scene):
    prior = se3_exp([0.05, 0.0, 0.05, 0.0, 0.01, 0.0]) @ scene.poses[5].inverse()
    runs = []
    for _ in range(2):
        _, curr = linked_frame_pair(scene, 4, 5)
        T, n = optimize_pose(curr, prior)
        runs.append((T.matrix().tobytes(), n))
    assert runs[0] == runs[1]


def test_no_linked_points_raises(rig):
    with pytest.raises(ValueError):
        optimize_pose(Frame(0, rig), Isometry3.identity())


def test_jacobian_rows_used_by_linearize(scene):
    prev, curr = linked_frame_pair(scene, 4, 5)
    cfg = TrackerConfig()
    truth = scene.poses[5].inverse()
    points = [fp for fp in curr.points if fp.prev is not None][:1]
    p_c = truth @ points[0].prev.p_w
    H, _, _, _, _ = linearize(curr, truth, cfg, points)
    J = stereo_jacobians(p_c[None], curr.rig)[0]
    z = p_c[2]
    w = ((cfg.close_depth - z) / cfg.close_depth if z < cfg.close_depth
         else (cfg.maximum_depth - z) / cfg.maximum_depth)
    if z >= cfg.close_depth:
        J[:, :3] = 0.0
    assert np.allclose(H, w * J.T @ J, rtol=1e-12, atol=1e-9)
