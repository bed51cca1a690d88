"""Trajectory accuracy metrics and the run report."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import Isometry3

KITTI_LENGTHS = (100, 200, 300, 400, 500, 600, 700, 800)


class DegenerateAlignment(ValueError):
    """Too few positions to align two trajectories."""


def path_distances(poses: Sequence[Isometry3]) -> np.ndarray:
    """Cumulative arc length along the camera centres, starting at 0."""
    pos = np.array([t.translation for t in poses])
    steps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


@dataclass(frozen=True)
class RelativeError:
    length: float
    translation_percent: float
    rotation_deg_per_100m: float
    windows: int


def _rotation_angle(r: np.ndarray) -> float:
    s = 0.5 * math.hypot(r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1])
    c = 0.5 * (r[0, 0] + r[1, 1] + r[2, 2] - 1.0)
    return math.atan2(s, c)


def kitti_relative_errors(estimate: Sequence[Isometry3], truth: Sequence[Isometry3],
                          lengths: Sequence[float] = KITTI_LENGTHS, step: int = 1
                          ) -> list[RelativeError]:
    """Average relative errors over subsequences of fixed ground-truth path length.

    For every ``step``-th start frame and every length ``L`` the window ends at
    the first frame whose cumulative distance is at least ``start + L``. Each
    window contributes ``|t(E)| / L`` and ``angle(E) / L`` with
    ``E = (gt_rel)^-1 est_rel``. Lengths with no complete window are omitted.
    """
    if len(estimate) != len(truth):
        raise ValueError("estimate and ground truth differ in length")
    if len(truth) < 2:
        raise ValueError("need at least two poses")
    dist = path_distances(truth)
    gt = [t.matrix() for t in truth]
    est = [t.matrix() for t in estimate]
    gt_inv = [np.linalg.inv(m) for m in gt]
    est_inv = [np.linalg.inv(m) for m in est]
    out = []
    for length in lengths:
        ends = np.searchsorted(dist, dist + length, side="left")
        t_sum = r_sum = 0.0
        count = 0
        for i in range(0, len(truth), step):
            j = int(ends[i])
            if j >= len(truth):
                continue
            gt_rel = gt_inv[i] @ gt[j]
            est_rel = est_inv[i] @ est[j]
            err = np.linalg.solve(gt_rel, est_rel)
            t_sum += np.linalg.norm(err[:3, 3]) / length
            r_sum += _rotation_angle(err[:3, :3]) / length
            count += 1
        if count:
            out.append(RelativeError(float(length), 100.0 * t_sum / count,
                                     100.0 * math.degrees(r_sum / count), count))
    return out


def average_relative_error(errors: Sequence[RelativeError]) -> tuple[float, float]:
    """Window-weighted mean ``(translation %, rotation deg/100 m)`` across lengths."""
    n = sum(e.windows for e in errors)
    if n == 0:
        return float("nan"), float("nan")
    t = sum(e.translation_percent * e.windows for e in errors) / n
    r = sum(e.rotation_deg_per_100m * e.windows for e in errors) / n
    return t, r


def rigid_alignment(source: np.ndarray, target: np.ndarray) -> Isometry3:
    """Least-squares rotation and translation mapping ``source`` onto ``target``."""
    mu_s, mu_t = source.mean(axis=0), target.mean(axis=0)
    u, _, vt = np.linalg.svd((target - mu_t).T @ (source - mu_s))
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    r = u @ np.diag([1.0, 1.0, d]) @ vt
    return Isometry3(r, mu_t - r @ mu_s)


def ate_rmse(estimate: Sequence[Isometry3], truth: Sequence[Isometry3], align: bool = True) -> float:
    """Root-mean-square position error after rigid (scale-free) alignment of ``estimate``."""
    if len(estimate) != len(truth):
        raise ValueError("estimate and ground truth differ in length")
    if len(truth) < 3:
        raise DegenerateAlignment(f"need at least 3 poses, got {len(truth)}")
    p_est = np.array([t.translation for t in estimate])
    p_gt = np.array([t.translation for t in truth])
    if align:
        sv = np.linalg.svd(p_gt - p_gt.mean(axis=0), compute_uv=False)
        if sv[1] <= 1e-9 * max(sv[0], 1.0):
            warnings.warn("ground-truth positions are collinear; rotation about the line is "
                          "unconstrained", RuntimeWarning, stacklevel=2)
        p_est = rigid_alignment(p_est, p_gt) @ p_est
    return float(np.sqrt(np.mean(np.sum((p_est - p_gt) ** 2, axis=1))))


@dataclass
class MetricsReport:
    relative_errors: list[RelativeError] = field(default_factory=list)
    ate_rmse: Optional[float] = None
    mean_frame_seconds: float = 0.0
    std_frame_seconds: float = 0.0
    frames_processed: int = 0
    local_maps: int = 0
    closures_accepted: int = 0
    lost_frames: int = 0

    @property
    def mean_translation_percent(self) -> float:
        return average_relative_error(self.relative_errors)[0]

    @property
    def mean_rotation_deg_per_100m(self) -> float:
        return average_relative_error(self.relative_errors)[1]

    def format_table(self) -> str:
        lines = [
            f"frames processed      {self.frames_processed}",
            f"lost frames           {self.lost_frames}",
            f"local maps            {self.local_maps}",
            f"closures accepted     {self.closures_accepted}",
            f"frame time mean (s)   {self.mean_frame_seconds:.4f}",
            f"frame time std (s)    {self.std_frame_seconds:.4f}",
        ]
        if self.ate_rmse is not None:
            lines.append(f"ATE RMSE (m)          {self.ate_rmse:.4f}")
        if self.relative_errors:
            lines.append("length (m)  trans (%)  rot (deg/100m)  windows")
            for e in self.relative_errors:
                lines.append(f"{e.length:10.0f}  {e.translation_percent:9.4f}  "
                             f"{e.rotation_deg_per_100m:14.4f}  {e.windows:7d}")
            t, r = average_relative_error(self.relative_errors)
            lines.append(f"{'average':>10}  {t:9.4f}  {r:14.4f}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "length_m", "value"])
        w.writerow(["frames_processed", "", self.frames_processed])
        w.writerow(["lost_frames", "", self.lost_frames])
        w.writerow(["local_maps", "", self.local_maps])
        w.writerow(["closures_accepted", "", self.closures_accepted])
        w.writerow(["mean_frame_seconds", "", repr(self.mean_frame_seconds)])
        w.writerow(["std_frame_seconds", "", repr(self.std_frame_seconds)])
        if self.ate_rmse is not None:
            w.writerow(["ate_rmse_m", "", repr(self.ate_rmse)])
        for e in self.relative_errors:
            w.writerow(["translation_percent", e.length, repr(e.translation_percent)])
            w.writerow(["rotation_deg_per_100m", e.length, repr(e.rotation_deg_per_100m)])
        return buf.getvalue()
