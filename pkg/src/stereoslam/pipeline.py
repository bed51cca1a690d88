"""The per-frame SLAM loop and its configuration."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .dataset import SequenceManifest, write_trajectory
from .frontend import DetectorState
from .geometry import Isometry3, StereoRig
from .mapper import (MapperConfig, maybe_create_local_map, promote_landmarks,
                     recover_correspondences, update_landmarks)
from .metrics import MetricsReport, ate_rmse, kitti_relative_errors
from .model import Frame, KeypointWD, WorldMap, link_track, unlink_track
from .posegraph import PoseGraph, add_closure_edge, broadcast_poses, optimize_graph
from .relocalizer import HBSTTree, RelocalizerConfig, insert_local_map, relocalize
from .stereo import build_frame, build_frame_from_keypoints
from .tracker import TrackerConfig, match_projections, optimize_pose, predict_motion

log = logging.getLogger(__name__)


class TrackingHalted(RuntimeError):
    """Too many consecutive frames could not be tracked."""

    def __init__(self, frame_id: int, lost: int):
        self.frame_id = frame_id
        super().__init__(f"tracking lost for {lost} consecutive frames, halted at frame {frame_id}")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SlamConfig:
    detector: DetectorState = DetectorState()
    tracker: TrackerConfig = TrackerConfig()
    mapper: MapperConfig = MapperConfig()
    relocalizer: RelocalizerConfig = RelocalizerConfig()
    bin_size: int = 24
    stereo_max_distance: int = 25
    max_lost_frames: int = 30
    relocalization: bool = True
    graph_iterations: int = 20

    def flat(self) -> dict:
        """Every setting under its flat key."""
        out = {}
        for section in _SECTIONS:
            obj = getattr(self, section)
            out.update({f.name: getattr(obj, f.name) for f in fields(obj)})
        out.update({name: getattr(self, name) for name in _TOP_LEVEL})
        return out

    def with_overrides(self, values: dict) -> SlamConfig:
        """Copy with flat-key overrides applied; unknown keys raise :class:`ConfigError`."""
        sections = {s: {} for s in _SECTIONS}
        top = {}
        for key, raw in values.items():
            owner = _KEY_OWNER.get(key)
            if owner is None:
                raise ConfigError(f"unknown configuration key {key!r}")
            target = top if owner == "" else sections[owner]
            target[key] = _convert(raw, _KEY_TYPES[key], key)
        try:
            updates = {s: replace(getattr(self, s), **v) for s, v in sections.items() if v}
            return replace(self, **updates, **top)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


_SECTIONS = ("detector", "tracker", "mapper", "relocalizer")
_TOP_LEVEL = ("bin_size", "stereo_max_distance", "max_lost_frames", "relocalization",
              "graph_iterations")
_KEY_OWNER: dict[str, str] = {}
_KEY_TYPES: dict[str, type] = {}
for _section in _SECTIONS:
    _default = getattr(SlamConfig(), _section)
    for _f in fields(_default):
        assert _f.name not in _KEY_OWNER, _f.name
        _KEY_OWNER[_f.name] = _section
        _KEY_TYPES[_f.name] = type(getattr(_default, _f.name))
for _name in _TOP_LEVEL:
    _KEY_OWNER[_name] = ""
    _KEY_TYPES[_name] = type(getattr(SlamConfig(), _name))


def _convert(raw, kind: type, key: str):
    if not isinstance(raw, str):
        return kind(raw)
    text = raw.strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for {key}") from None


def parse_config(text: str, base: SlamConfig = SlamConfig()) -> SlamConfig:
    """Apply ``key = value`` lines to ``base``; ``#`` starts a comment."""
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return base.with_overrides(values)


def format_config(config: SlamConfig) -> str:
    return "".join(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n"
                   for k, v in config.flat().items())


@dataclass
class FrameResult:
    id: int
    timestamp: float
    framepoints: int
    tracked: int = 0
    inliers: int = 0
    recovered: int = 0
    new_landmarks: int = 0
    lost: bool = False
    local_map: Optional[int] = None
    closures: int = 0
    seconds: float = 0.0


class SlamSystem:
    """Single-threaded tracking, mapping and loop closing over a stereo stream."""

    def __init__(self, rig: StereoRig, config: SlamConfig = SlamConfig()):
        self.rig = rig
        self.config = config
        self.world = WorldMap(graph=PoseGraph())
        rc = config.relocalizer
        self.tree = HBSTTree(rc.max_leaf_size, rc.tree_max_depth)
        self.detector = config.detector
        self.frames: list[Frame] = []
        self.pending: list[Frame] = []
        self.closures = []
        self.results: list[FrameResult] = []
        self.lost_streak = 0

    def prior(self) -> Isometry3:
        if not self.frames:
            return self.world.T_w2c
        prev = self.frames[-1].T_w2c
        prevprev = self.frames[-2].T_w2c if len(self.frames) > 1 else None
        return predict_motion(prev, prevprev)

    def process_images(self, image_L: np.ndarray, image_R: np.ndarray,
                       timestamp: float = 0.0) -> FrameResult:
        start = time.perf_counter()
        prior = self.prior()
        frame, self.detector = build_frame(image_L, image_R, self.rig, self.detector, prior,
                                           frame_id=len(self.frames), timestamp=timestamp,
                                           bin_size=self.config.bin_size,
                                           max_distance=self.config.stereo_max_distance)
        return self._process(frame, prior, start)

    def process_keypoints(self, K_L: Sequence[KeypointWD], K_R: Sequence[KeypointWD],
                          sampler: Optional[Callable] = None, timestamp: float = 0.0) -> FrameResult:
        start = time.perf_counter()
        prior = self.prior()
        frame = build_frame_from_keypoints(K_L, K_R, self.rig, prior, frame_id=len(self.frames),
                                           timestamp=timestamp, sampler=sampler,
                                           bin_size=self.config.bin_size,
                                           max_distance=self.config.stereo_max_distance)
        return self._process(frame, prior, start)

    def _process(self, frame: Frame, prior: Isometry3, start: float) -> FrameResult:
        result = FrameResult(frame.id, frame.timestamp, len(frame.points))
        prev = self.frames[-1] if self.frames else None
        if prev is None:
            frame.set_pose_w2c(prior)
        else:
            self._track(prev, frame, prior, result)
        self.frames.append(frame)
        self.pending.append(frame)
        self._map(result)
        frame.release_images()
        result.seconds = time.perf_counter() - start
        self.results.append(result)
        if result.lost and self.lost_streak >= self.config.max_lost_frames:
            raise TrackingHalted(frame.id, self.lost_streak)
        return result

    def _track(self, prev: Frame, frame: Frame, prior: Isometry3, result: FrameResult) -> None:
        cfg = self.config
        matches, unmatched = match_projections(prev, [fp.k_L for fp in frame.points], prior,
                                               cfg.tracker)
        for prev_fp, j in matches:
            link_track(prev_fp, frame.points[j])
        result.tracked = len(matches)
        inliers = 0
        if matches:
            pose, inliers = optimize_pose(frame, prior, cfg.tracker)
        result.inliers = inliers
        if inliers < cfg.tracker.min_inliers:
            self._lose(frame, prior, result)
            return
        self.lost_streak = 0
        frame.set_pose_w2c(pose)
        for fp in frame.points:
            if fp.prev is not None and not fp.inlier:
                unmatched.append(fp.prev)
                unlink_track(fp)
        frame.update_world_points()
        result.recovered = recover_correspondences(unmatched, frame, cfg.mapper)
        update_landmarks(frame, cfg.mapper)
        result.new_landmarks = len(promote_landmarks(frame, self.world, cfg.mapper))

    def _lose(self, frame: Frame, prior: Isometry3, result: FrameResult) -> None:
        """Adopt the motion prior, drop all links and skip landmark work for this frame."""
        frame.lost = True
        result.lost = True
        self.lost_streak += 1
        for fp in frame.points:
            unlink_track(fp)
        frame.set_pose_w2c(prior)
        frame.update_world_points()
        log.warning("frame %d: tracking unreliable (%d inliers), using motion prior",
                    frame.id, result.inliers)

    def _map(self, result: FrameResult) -> None:
        cfg = self.config
        lmap = maybe_create_local_map(self.world, self.pending, cfg.mapper)
        if lmap is None:
            return
        result.local_map = lmap.id
        if not cfg.relocalization:
            return
        closures = relocalize(self.world, lmap, self.tree, cfg.relocalizer)
        insert_local_map(self.tree, lmap)
        if not closures:
            return
        for c in closures:
            add_closure_edge(self.world.graph, c)
            log.info("closure between local maps %d and %d (%d inliers)", c.map_i, c.map_j,
                     c.inliers)
        self.closures.extend(closures)
        result.closures = len(closures)
        optimize_graph(self.world.graph, cfg.graph_iterations)
        broadcast_poses(self.world, self.world.graph)

    def trajectory(self) -> list[Isometry3]:
        """Current ``T_c2w`` estimate of every processed frame."""
        return [f.T_c2w for f in self.frames]

    def report(self, truth: Optional[Sequence[Isometry3]] = None) -> MetricsReport:
        seconds = np.array([r.seconds for r in self.results]) if self.results else np.zeros(1)
        report = MetricsReport(
            mean_frame_seconds=float(seconds.mean()), std_frame_seconds=float(seconds.std()),
            frames_processed=len(self.frames), local_maps=len(self.world.maps),
            closures_accepted=len(self.closures), lost_frames=sum(r.lost for r in self.results))
        if truth is not None and len(self.frames) >= 2:
            truth = list(truth)[:len(self.frames)]
            estimate = self.trajectory()
            report.relative_errors = kitti_relative_errors(estimate, truth)
            if len(truth) >= 3:
                report.ate_rmse = ate_rmse(estimate, truth)
        return report


FRAME_CSV_HEADER = ("frame", "timestamp", "seconds", "framepoints", "tracked", "inliers",
                    "recovered", "new_landmarks", "lost", "local_map", "closures",
                    "position_error_m")


def write_frame_csv(path, results: Sequence[FrameResult], estimate: Sequence[Isometry3],
                    truth: Optional[Sequence[Isometry3]] = None) -> None:
    """Per-frame timings and counts; the position error column is empty without ground truth."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRAME_CSV_HEADER)
        for k, r in enumerate(results):
            err = ""
            if truth is not None and k < len(truth):
                err = repr(float(np.linalg.norm(estimate[k].translation - truth[k].translation)))
            w.writerow([r.id, repr(r.timestamp), repr(r.seconds), r.framepoints, r.tracked,
                        r.inliers, r.recovered, r.new_landmarks, int(r.lost),
                        "" if r.local_map is None else r.local_map, r.closures, err])


def write_outputs(system: SlamSystem, out_dir, truth: Optional[Sequence[Isometry3]] = None
                  ) -> MetricsReport:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    estimate = system.trajectory()
    write_trajectory(estimate, out / "trajectory.txt")
    report = system.report(truth)
    (out / "metrics.txt").write_text(report.format_table())
    (out / "metrics.csv").write_text(report.to_csv())
    write_frame_csv(out / "frames.csv", system.results, estimate, truth)
    return report


def run_pipeline(manifest: SequenceManifest, config: SlamConfig = SlamConfig(),
                 out_dir=None) -> tuple[MetricsReport, list[Isometry3]]:
    """Process a whole sequence. On a tracking halt the partial outputs are still
    written before :class:`TrackingHalted` propagates."""
    system = SlamSystem(manifest.rig, config)
    try:
        for i in range(len(manifest)):
            image_L, image_R = manifest.load_pair(i)
            system.process_images(image_L, image_R, float(manifest.timestamps[i]))
    finally:
        if out_dir is not None:
            write_outputs(system, out_dir, manifest.ground_truth)
    return system.report(manifest.ground_truth), system.trajectory()


def run_synthetic(scene, config: SlamConfig = SlamConfig(), *, images: bool = False,
                  frames: Optional[int] = None) -> SlamSystem:
    """Run the pipeline over a synthetic scene, from keypoints or from rendered images."""
    from .synthworld import render_frame

    system = SlamSystem(scene.spec.rig(), config)
    count = len(scene.poses) if frames is None else min(frames, len(scene.poses))
    times = scene.timestamps
    for i in range(count):
        rendered = render_frame(scene, i, images=images)
        if images:
            system.process_images(rendered.image_L, rendered.image_R, float(times[i]))
        else:
            system.process_keypoints(rendered.keypoints_L, rendered.keypoints_R,
                                     rendered.sampler, float(times[i]))
    return system
