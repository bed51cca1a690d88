"""Map management: correspondence recovery, landmark promotion and filtering, local maps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import project_points
from .model import Frame, Framepoint, KeypointWD, Landmark, LocalMap, WorldMap, link_track, track_head, track_length
from .posegraph import PoseGraph, add_odometry_edge
from .tracker import reference_position


@dataclass(frozen=True)
class MapperConfig:
    recovery_max_distance: int = 25
    min_track_for_landmark: int = 3
    map_translation_threshold: float = 5.0
    map_rotation_threshold: float = 0.5
    # standard deviation of a landmark measurement at 1 m depth, grows linearly with depth
    measurement_sigma: float = 0.01

    def __post_init__(self):
        for name in ("recovery_max_distance", "min_track_for_landmark", "map_translation_threshold",
                     "map_rotation_threshold", "measurement_sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def recover_correspondences(prev_unmatched: Sequence[Framepoint], curr_frame: Frame,
                            cfg: MapperConfig = MapperConfig()) -> int:
    """Relocate lost track ends in the current left image using the optimized pose.

    Each point is projected with ``curr_frame.T_w2c``; the frame's sampler
    supplies a descriptor near the projection. When it is within
    ``recovery_max_distance`` of the point's left descriptor the track is
    continued: onto an unlinked current framepoint at the same location if one
    exists, otherwise onto a new framepoint whose right keypoint is placed at
    the projected disparity. Returns the number of tracks continued.
    """
    if not prev_unmatched or curr_frame.sampler is None:
        return 0
    rig = curr_frame.rig
    cam = rig.cam_L
    positions = np.array([reference_position(fp) for fp in prev_unmatched])
    p_c = curr_frame.T_w2c @ positions
    rows, cols, depth = project_points(p_c, cam.P)
    by_location = {(fp.k_L.r, fp.k_L.c): fp for fp in curr_frame.points}

    recovered = 0
    for fp, r, c, z in zip(prev_unmatched, rows.tolist(), cols.tolist(), depth.tolist()):
        if fp.next is not None or not z > 0 or not cam.contains(r, c):
            continue
        disparity = rig.B / z
        if disparity < 1.0:
            continue
        sample = curr_frame.sampler(r, c)
        if sample is None:
            continue
        rs, cs, d = sample
        if (fp.k_L.d ^ d).bit_count() > cfg.recovery_max_distance:
            continue
        existing = by_location.get((rs, cs))
        if existing is not None:
            if existing.prev is not None:
                continue
            link_track(fp, existing)
            recovered += 1
            continue
        k_l = KeypointWD(rs, cs, 0.0, d)
        k_r = KeypointWD(rs, cs - disparity, 0.0, None)
        pc = np.array([z / cam.fx * (cs - cam.cx), z / cam.fy * (rs - cam.cy), z])
        new = Framepoint(k_l, k_r, pc, curr_frame.T_c2w @ pc, inlier=True, recovered=True)
        link_track(fp, new)
        curr_frame.points.append(new)
        by_location[(rs, cs)] = new
        recovered += 1
    return recovered


def update_landmark_filter(lm: Landmark, p_w_measured, depth: float,
                           cfg: MapperConfig = MapperConfig()) -> Landmark:
    """Fold one world-frame measurement into the landmark's information filter."""
    if not depth > 0:
        raise ValueError("measurement depth must be positive")
    w = 1.0 / (cfg.measurement_sigma * depth) ** 2
    m = np.asarray(p_w_measured, dtype=float)
    lm.omega = lm.omega + w * np.eye(3)
    lm.nu = lm.nu + w * m
    lm.p_w = np.linalg.solve(lm.omega, lm.nu)
    lm.observation_count += 1
    return lm


def update_landmarks(curr_frame: Frame, cfg: MapperConfig = MapperConfig()) -> int:
    """Filter update for every framepoint of the frame that already carries a landmark."""
    n = 0
    for fp in curr_frame.points:
        if fp.landmark is not None:
            update_landmark_filter(fp.landmark, fp.p_w, fp.p_c[2], cfg)
            fp.landmark.add_descriptor(fp.k_L.d)
            n += 1
    return n


def promote_landmarks(curr_frame: Frame, world: WorldMap,
                      cfg: MapperConfig = MapperConfig()) -> list[Landmark]:
    """Create landmarks for tracks that reached ``min_track_for_landmark`` frames."""
    created = []
    for fp in curr_frame.points:
        if fp.landmark is not None or fp.prev is None:
            continue
        if track_length(fp, cfg.min_track_for_landmark) < cfg.min_track_for_landmark:
            continue
        lm = world.new_landmark(fp.p_w, track_head(fp))
        update_landmark_filter(lm, fp.p_w, fp.p_c[2], cfg)
        node = fp
        while node is not None:
            node.landmark = lm
            node = node.prev
        lm.add_descriptor(fp.k_L.d)
        created.append(lm)
    return created


def observed_landmarks(frames: Sequence[Frame]) -> list[Landmark]:
    """Distinct landmarks seen by ``frames``, in order of first observation."""
    seen: dict[int, Landmark] = {}
    for frame in frames:
        for fp in frame.points:
            lm = fp.landmark
            if lm is not None and lm.id not in seen:
                seen[lm.id] = lm
    return list(seen.values())


def maybe_create_local_map(world: WorldMap, frames_since_last: list[Frame],
                           cfg: MapperConfig = MapperConfig()) -> Optional[LocalMap]:
    """Close the pending frames into a local map once the camera moved far enough.

    Motion is measured from the previous local map's pose, or the world origin
    for the first map. On creation the pending list is emptied, a pose-graph
    node is added and, from the second map on, an odometry edge.
    """
    if not frames_since_last:
        raise ValueError("no pending frames")
    previous = world.last_map()
    reference = previous.T_c2w if previous is not None else world.T_c2w
    motion = reference.inverse() @ frames_since_last[-1].T_c2w
    if (np.linalg.norm(motion.translation) <= cfg.map_translation_threshold
            and motion.angle() <= cfg.map_rotation_threshold):
        return None
    lmap = LocalMap.from_frames(len(world.maps), frames_since_last,
                                observed_landmarks(frames_since_last))
    for lm in lmap.landmarks:
        lm.local_map_id = lmap.id
    world.maps.append(lmap)
    if world.graph is None:
        world.graph = PoseGraph()
    world.graph.add_node(lmap.id, lmap.T_c2w)
    if previous is not None:
        add_odometry_edge(world.graph, previous, lmap)
    frames_since_last.clear()
    return lmap
