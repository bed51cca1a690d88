"""Epipolar stereo matching and frame assembly (the triangulation stage)."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .frontend import (DescriptorImage, DetectorState, adapt_threshold, fast_corners,
                       regularize_indices, unpack_descriptors)
from .geometry import Isometry3, StereoRig
from .model import Frame, Framepoint, KeypointWD, Sampler

DEFAULT_BIN_SIZE = 24
DEFAULT_MAX_DISTANCE = 25


def _row_major(keypoints: Sequence[KeypointWD]):
    """Keypoints sorted by (row, column), stably, with their rows, columns and descriptors."""
    rows = np.fromiter((k.r for k in keypoints), float, len(keypoints))
    cols = np.fromiter((k.c for k in keypoints), float, len(keypoints))
    order = np.lexsort((cols, rows))
    ordered = [keypoints[i] for i in order.tolist()]
    return ordered, rows[order].tolist(), cols[order].tolist(), [k.d for k in ordered]


def match_stereo(K_L: Sequence[KeypointWD], K_R: Sequence[KeypointWD],
                 max_distance: int = DEFAULT_MAX_DISTANCE) -> list[tuple[KeypointWD, KeypointWD]]:
    """Match left to right keypoints along rectified rows in a single merge pass.

    For each left keypoint, the right keypoints on the same row with a smaller
    column are scanned and the one with the smallest Hamming distance below
    ``max_distance`` wins. The scan of the next left keypoint starts after the
    matched right keypoint, so matches are one-to-one and column-monotone.
    """
    left, rows_l, cols_l, desc_l = _row_major(K_L)
    right, rows_r, cols_r, desc_r = _row_major(K_R)
    n_r = len(right)
    pairs = []
    idx_r = 0
    for i, row in enumerate(rows_l):
        while idx_r < n_r and rows_r[idx_r] < row:
            idx_r += 1
        if idx_r == n_r:
            break
        if rows_r[idx_r] > row:
            continue
        col = cols_l[i]
        d_l = desc_l[i]
        best = max_distance
        best_idx = -1
        j = idx_r
        while j < n_r and rows_r[j] == row and cols_r[j] < col:
            dist = (d_l ^ desc_r[j]).bit_count()
            if dist < best:
                best = dist
                best_idx = j
            j += 1
        if best_idx >= 0:
            pairs.append((left[i], right[best_idx]))
            idx_r = best_idx + 1
    return pairs


def _framepoints(pairs, rig: StereoRig, T_c2w: Isometry3) -> list[Framepoint]:
    """Triangulate matched pairs; pairs with disparity below one pixel are dropped."""
    if not pairs:
        return []
    cam = rig.cam_L
    rl = np.array([p[0].r for p in pairs], dtype=float)
    cl = np.array([p[0].c for p in pairs], dtype=float)
    cr = np.array([p[1].c for p in pairs], dtype=float)
    disparity = cl - cr
    ok = disparity >= 1.0
    z = rig.B / np.where(ok, disparity, 1.0)
    pc = np.stack([z / cam.fx * (cl - cam.cx), z / cam.fy * (rl - cam.cy), z], axis=1)
    pw = T_c2w @ pc
    return [Framepoint(kl, kr, pc[i], pw[i])
            for i, ((kl, kr), good) in enumerate(zip(pairs, ok)) if good]


def build_frame(image_L: np.ndarray, image_R: np.ndarray, rig: StereoRig,
                detector: DetectorState, prior: Isometry3, *, frame_id: int = 0,
                timestamp: float = 0.0, bin_size: int = DEFAULT_BIN_SIZE,
                max_distance: int = DEFAULT_MAX_DISTANCE) -> tuple[Frame, DetectorState]:
    """Detect, regularize (left only), describe, match and triangulate one stereo pair.

    ``prior`` is the ``T_w2c`` used to place the new framepoints in the world.
    Returns the frame and the adapted detector state.
    """
    h, w = np.shape(image_L)
    if np.shape(image_R) != (h, w) or (w, h) != (rig.cam_L.width, rig.cam_L.height):
        raise ValueError(f"image size {(h, w)} does not match the stereo rig")
    di_l = DescriptorImage(image_L)
    di_r = DescriptorImage(image_R)

    rows_l, cols_l, resp_l = fast_corners(image_L, detector.threshold)
    new_state = adapt_threshold(detector, len(rows_l))
    keep = regularize_indices(rows_l, cols_l, resp_l, bin_size)
    rows_l, cols_l, resp_l = rows_l[keep], cols_l[keep], resp_l[keep]
    rows_r, cols_r, resp_r = fast_corners(image_R, detector.threshold)

    K_L = _describe(di_l, rows_l, cols_l, resp_l)
    K_R = _describe(di_r, rows_r, cols_r, resp_r)
    pairs = match_stereo(K_L, K_R, max_distance)

    T_c2w = prior.inverse()
    frame = Frame(frame_id, rig, T_c2w, _framepoints(pairs, rig, T_c2w), timestamp,
                  images=(image_L, image_R), sampler=di_l.sample)
    frame.degenerate = not frame.points
    return frame, new_state


def _describe(di: DescriptorImage, rows, cols, resp) -> list[KeypointWD]:
    ok = di.extractable(rows, cols)
    rows, cols, resp = rows[ok], cols[ok], resp[ok]
    descriptors = unpack_descriptors(di.describe(rows, cols))
    return [KeypointWD(int(r), int(c), float(s), d)
            for r, c, s, d in zip(rows.tolist(), cols.tolist(), resp.tolist(), descriptors)]


def build_frame_from_keypoints(K_L: Sequence[KeypointWD], K_R: Sequence[KeypointWD],
                               rig: StereoRig, prior: Isometry3, *, frame_id: int = 0,
                               timestamp: float = 0.0, sampler: Optional[Sampler] = None,
                               bin_size: Optional[int] = DEFAULT_BIN_SIZE,
                               max_distance: int = DEFAULT_MAX_DISTANCE) -> Frame:
    """Frame assembly for keypoint streams that already carry descriptors."""
    if bin_size is not None and K_L:
        idx = regularize_indices(np.array([k.r for k in K_L]), np.array([k.c for k in K_L]),
                                 np.array([k.response for k in K_L]), bin_size)
        K_L = [K_L[i] for i in idx]
    pairs = match_stereo(K_L, K_R, max_distance)
    T_c2w = prior.inverse()
    frame = Frame(frame_id, rig, T_c2w, _framepoints(pairs, rig, T_c2w), timestamp,
                  sampler=sampler)
    frame.degenerate = not frame.points
    return frame
