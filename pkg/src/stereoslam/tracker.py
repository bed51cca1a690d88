"""Incremental motion estimation: motion prior, projective matching, pose refinement."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import Isometry3, project_points, stereo_jacobians, v2t
from .model import Frame, Framepoint, KeypointWD


@dataclass(frozen=True)
class TrackerConfig:
    search_half_width: float = 25.0
    search_half_height: float = 25.0
    match_max_distance: int = 25
    iterations: int = 10
    kernel_maximum_error: float = 100.0
    # drop points above the kernel instead of down-weighting them
    ignore_outliers: bool = False
    close_depth: float = 15.0
    maximum_depth: float = 75.0
    landmark_weight: float = 1.5
    min_inliers: int = 15

    def __post_init__(self):
        if not 0 < self.close_depth < self.maximum_depth:
            raise ValueError("need 0 < close_depth < maximum_depth")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


def predict_motion(pose_prev: Isometry3, pose_prevprev: Optional[Isometry3] = None) -> Isometry3:
    """Constant-velocity prior for the next ``T_w2c``."""
    if pose_prevprev is None:
        return pose_prev
    motion = pose_prev @ pose_prevprev.inverse()
    return (motion @ pose_prev).normalized()


def reference_position(fp: Framepoint) -> np.ndarray:
    """World position used to reproject a framepoint: its landmark's if it has one."""
    return fp.landmark.p_w if fp.landmark is not None else fp.p_w


def match_projections(prev_frame: Frame, curr_keypoints: Sequence[KeypointWD], prior: Isometry3,
                      cfg: TrackerConfig = TrackerConfig()
                      ) -> tuple[list[tuple[Framepoint, int]], list[Framepoint]]:
    """Match previous framepoints to current left keypoints inside a window around their projection.

    Returns ``(matches, unmatched)``: ``matches`` pairs each matched previous
    framepoint with the index of its keypoint in ``curr_keypoints``. Previous
    points are processed in order; each current keypoint is used at most once.
    Among candidates the lowest Hamming distance wins, ties going to the one
    closest to the projection.
    """
    prev_points = prev_frame.points
    if not prev_points:
        return [], []
    cam = prev_frame.rig.cam_L
    positions = np.array([reference_position(fp) for fp in prev_points])
    rows, cols, depth = project_points(prior @ positions, cam.P)
    visible = (depth > 0) & (rows >= 0) & (rows < cam.height) & (cols >= 0) & (cols < cam.width)

    n_curr = len(curr_keypoints)
    cur_r = np.array([k.r for k in curr_keypoints], dtype=float)
    cur_c = np.array([k.c for k in curr_keypoints], dtype=float)
    cur_d = [k.d for k in curr_keypoints]
    taken = np.zeros(n_curr, bool)
    hw, hh = cfg.search_half_width, cfg.search_half_height

    matches: list[tuple[Framepoint, int]] = []
    unmatched: list[Framepoint] = []
    for i, fp in enumerate(prev_points):
        if not visible[i] or n_curr == 0:
            unmatched.append(fp)
            continue
        dr = cur_r - rows[i]
        dc = cur_c - cols[i]
        cand = np.flatnonzero((np.abs(dr) <= hh) & (np.abs(dc) <= hw) & ~taken)
        best_key, best_j = None, -1
        d_prev = fp.k_L.d
        for j in cand.tolist():
            dist = (d_prev ^ cur_d[j]).bit_count()
            if dist < cfg.match_max_distance:
                key = (dist, dr[j] * dr[j] + dc[j] * dc[j])
                if best_key is None or key < best_key:
                    best_key, best_j = key, j
        if best_j < 0:
            unmatched.append(fp)
        else:
            taken[best_j] = True
            matches.append((fp, best_j))
    return matches, unmatched


def _measurements(points: Sequence[Framepoint]) -> np.ndarray:
    return np.array([(fp.k_L.c, fp.k_L.r, fp.k_R.c, fp.k_R.r) for fp in points], dtype=float)


def linearize(frame: Frame, T_w2c: Isometry3, cfg: TrackerConfig,
              points: Optional[Sequence[Framepoint]] = None):
    """Assemble the damped-normal-equation terms at ``T_w2c``.

    Returns ``(H, b, chi2, errors_squared, used)`` where ``used`` marks the
    points that contributed (positive depth below ``maximum_depth``). Squared
    errors are reported for every point in front of the camera and are
    infinite for points behind it.
    """
    if points is None:
        points = [fp for fp in frame.points if fp.prev is not None]
    rig = frame.rig
    world = np.array([fp.prev.p_w if fp.landmark is None else fp.landmark.p_w for fp in points])
    is_landmark = np.array([fp.landmark is not None for fp in points])
    measured = _measurements(points)

    p_c = T_w2c @ world
    z = p_c[:, 2]
    front = z > 0.0
    err2 = np.full(len(points), np.inf)
    if np.any(front):
        r_l, c_l, _ = project_points(p_c[front], rig.cam_L.P)
        r_r, c_r, _ = project_points(p_c[front], rig.cam_R.P)
        err_front = np.stack([c_l, r_l, c_r, r_r], axis=1) - measured[front]
        err2[front] = np.einsum("ij,ij->i", err_front, err_front)
    # points beyond maximum_depth keep their error for the inlier test but carry no weight
    used = front & (z < cfg.maximum_depth)
    if not np.any(used):
        return np.zeros((6, 6)), np.zeros(6), 0.0, err2, used

    pc = p_c[used]
    zu = z[used]
    err = err_front[used[front]]
    e2 = err2[used]

    weight = np.where(is_landmark[used], cfg.landmark_weight, 1.0)
    outside = e2 > cfg.kernel_maximum_error
    if cfg.ignore_outliers:
        weight = np.where(outside, 0.0, weight)
    else:
        weight = np.where(outside, weight * cfg.kernel_maximum_error / np.where(outside, e2, 1.0),
                          weight)
    J = stereo_jacobians(pc, rig)
    close = zu < cfg.close_depth
    weight = weight * np.where(close, (cfg.close_depth - zu) / cfg.close_depth,
                               (cfg.maximum_depth - zu) / cfg.maximum_depth)
    # far points only inform the rotation
    J[~close, :, :3] = 0.0

    H = np.einsum("n,nki,nkj->ij", weight, J, J)
    b = np.einsum("n,nki,nk->i", weight, J, err)
    chi2 = float(np.sum(weight * e2))
    return H, b, chi2, err2, used


def optimize_pose(frame: Frame, prior: Isometry3, cfg: TrackerConfig = TrackerConfig()
                  ) -> tuple[Isometry3, int]:
    """Refine ``T_w2c`` from the frame's linked framepoints.

    Runs exactly ``cfg.iterations`` identity-damped Gauss-Newton steps with
    the update ``T_w2c <- v2t(dx) @ T_w2c``. Inlier flags are set from the
    errors evaluated in the last iteration. Returns the pose and the inlier
    count; the caller decides whether that count is enough to trust.
    """
    points = [fp for fp in frame.points if fp.prev is not None]
    if not points:
        raise ValueError("frame has no linked framepoints")
    T = prior
    err2 = None
    for _ in range(cfg.iterations):
        H, b, _, err2, _ = linearize(frame, T, cfg, points)
        dx = np.linalg.solve(H + np.eye(6), -b)
        T = v2t(dx) @ T
    T = T.normalized()
    inliers = 0
    for fp, e2 in zip(points, err2):
        fp.inlier = bool(e2 <= cfg.kernel_maximum_error)
        inliers += fp.inlier
    return T, inliers
