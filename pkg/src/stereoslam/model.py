"""Persistent map records: keypoints, framepoints, frames, landmarks, local maps, world map."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import Isometry3, StereoRig


class ContractViolation(RuntimeError):
    """A record was used in a way its linkage rules forbid."""


@dataclass(slots=True)
class KeypointWD:
    """Keypoint with descriptor.

    ``r``/``c`` are integer pixel coordinates for image-derived keypoints;
    synthetic keypoint streams may carry sub-pixel values. ``d`` is a 256-bit
    descriptor stored as a Python int (bit ``i`` is ``(d >> i) & 1``).
    """

    r: float
    c: float
    response: float = 0.0
    d: Optional[int] = None


@dataclass(slots=True, eq=False)
class Framepoint:
    k_L: KeypointWD
    k_R: KeypointWD
    p_c: np.ndarray
    p_w: np.ndarray
    prev: Optional[Framepoint] = None
    next: Optional[Framepoint] = None
    landmark: Optional[Landmark] = None
    inlier: bool = False
    # set for points created by correspondence recovery rather than stereo matching
    recovered: bool = False
    # length of the track ending here, maintained by link_track
    age: int = 1

    def __repr__(self) -> str:
        lm = self.landmark.id if self.landmark is not None else None
        return (f"Framepoint(r={self.k_L.r}, c_L={self.k_L.c}, c_R={self.k_R.c}, "
                f"age={self.age}, landmark={lm})")


def link_track(prev: Framepoint, curr: Framepoint) -> tuple[Framepoint, Framepoint]:
    """Append ``curr`` to the track ending in ``prev``."""
    if curr.prev is not None:
        raise ContractViolation("framepoint is already linked to a predecessor")
    if prev.next is not None:
        raise ContractViolation("predecessor framepoint already has a successor")
    if prev is curr:
        raise ContractViolation("cannot link a framepoint to itself")
    curr.prev = prev
    prev.next = curr
    curr.age = prev.age + 1
    if prev.landmark is not None:
        curr.landmark = prev.landmark
    return prev, curr


def unlink_track(curr: Framepoint) -> None:
    """Break the link between ``curr`` and its predecessor (tracking outliers)."""
    if curr.prev is not None:
        curr.prev.next = None
        curr.prev = None
    curr.age = 1
    curr.landmark = None


def track_length(fp: Framepoint, limit: Optional[int] = None) -> int:
    """Number of framepoints reachable via ``prev``, ``fp`` included.

    With ``limit`` the walk stops early once that many points were counted.
    """
    seen = set()
    n = 0
    node = fp
    while node is not None:
        if id(node) in seen:
            raise ContractViolation("cycle detected in framepoint track")
        seen.add(id(node))
        n += 1
        if limit is not None and n >= limit:
            return n
        node = node.prev
    return n


def track_head(fp: Framepoint) -> Framepoint:
    node = fp
    while node.prev is not None:
        node = node.prev
    return node


# descriptor sampler for correspondence recovery: (r, c) -> (r, c, descriptor) or None
Sampler = Callable[[float, float], Optional[tuple]]


class Frame:
    """Measurements and pose estimate for one stereo image pair."""

    def __init__(self, id: int, rig: StereoRig, T_c2w: Optional[Isometry3] = None,
                 points: Optional[list[Framepoint]] = None, timestamp: float = 0.0,
                 images: Optional[tuple[np.ndarray, np.ndarray]] = None,
                 sampler: Optional[Sampler] = None):
        self.id = id
        self.rig = rig
        self.T_c2w = T_c2w if T_c2w is not None else Isometry3.identity()
        self.points: list[Framepoint] = points if points is not None else []
        self.timestamp = timestamp
        self.images = images
        self.sampler = sampler
        self.degenerate = False
        self.lost = False
        self.local_map: Optional[LocalMap] = None

    @property
    def T_c2w(self) -> Isometry3:
        return self._T_c2w

    @T_c2w.setter
    def T_c2w(self, value: Isometry3) -> None:
        self._T_c2w = value
        self._T_w2c = value.inverse()

    @property
    def T_w2c(self) -> Isometry3:
        return self._T_w2c

    def set_pose_w2c(self, T_w2c: Isometry3) -> None:
        self._T_w2c = T_w2c
        self._T_c2w = T_w2c.inverse()

    def update_world_points(self) -> None:
        """Recompute every framepoint's ``p_w`` from its ``p_c`` and the frame pose."""
        if not self.points:
            return
        pw = self._T_c2w @ np.array([fp.p_c for fp in self.points])
        for fp, p in zip(self.points, pw):
            fp.p_w = p

    def release_images(self) -> None:
        self.images = None
        self.sampler = None

    def __repr__(self) -> str:
        return f"Frame(id={self.id}, points={len(self.points)})"


@dataclass(eq=False)
class Landmark:
    """World point refined by an information filter (``p_w = omega^-1 nu``)."""

    id: int
    p_w: np.ndarray
    origin: Framepoint
    omega: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    nu: np.ndarray = field(default_factory=lambda: np.zeros(3))
    observation_count: int = 0
    # id of the most recent local map that contains this landmark
    local_map_id: Optional[int] = None
    # (descriptor) observations gathered along the track
    descriptors: list[int] = field(default_factory=list)

    def add_descriptor(self, d: Optional[int]) -> None:
        if d is not None and (not self.descriptors or self.descriptors[-1] != d):
            self.descriptors.append(d)

    def __repr__(self) -> str:
        return f"Landmark(id={self.id}, p_w={self.p_w.tolist()}, n={self.observation_count})"


@dataclass(eq=False)
class LocalMap:
    id: int
    T_c2w: Isometry3
    frames: list[Frame]
    landmarks: list[Landmark]
    relative_frame_poses: list[Isometry3]

    @property
    def T_w2c(self) -> Isometry3:
        return self.T_c2w.inverse()

    @classmethod
    def from_frames(cls, map_id: int, frames: list[Frame], landmarks: list[Landmark]) -> LocalMap:
        pose = frames[-1].T_c2w
        inv = pose.inverse()
        rel = [inv @ f.T_c2w for f in frames]
        lmap = cls(map_id, pose, list(frames), list(landmarks), rel)
        for f in frames:
            f.local_map = lmap
        return lmap

    def __repr__(self) -> str:
        return f"LocalMap(id={self.id}, frames={len(self.frames)}, landmarks={len(self.landmarks)})"


@dataclass(eq=False)
class WorldMap:
    """Owner of all local maps and landmarks, plus the pose graph over the maps."""

    T_c2w: Isometry3 = field(default_factory=Isometry3.identity)
    maps: list[LocalMap] = field(default_factory=list)
    landmarks: dict[int, Landmark] = field(default_factory=dict)
    graph: object = None
    _landmark_ids: itertools.count = field(default_factory=itertools.count, repr=False)

    @property
    def T_w2c(self) -> Isometry3:
        return self.T_c2w.inverse()

    def new_landmark(self, p_w: np.ndarray, origin: Framepoint) -> Landmark:
        lm = Landmark(next(self._landmark_ids), np.array(p_w, dtype=float), origin)
        self.landmarks[lm.id] = lm
        return lm

    def last_map(self) -> Optional[LocalMap]:
        return self.maps[-1] if self.maps else None

    def map_by_id(self, map_id: int) -> LocalMap:
        m = self.maps[map_id]
        assert m.id == map_id
        return m
