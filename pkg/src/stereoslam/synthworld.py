"""Synthetic stereo worlds with exact ground truth.

A scene is a cloud of world points scattered in a corridor around a camera
path. Frames can be rendered in two forms:

* keypoints: exact pinhole projections (optionally noisy and/or quantized),
  each world point carrying its own random 256-bit descriptor;
* images: 8-bit stereo images where every visible point is drawn as a 5x5
  stamp (bright centre, a ring coloured by a per-point code, a background
  guard ring), so the real detector and descriptor can run end to end.

The camera frame is x right, y down, z forward; the path lies in the world
x-z plane with the first camera at the origin looking along +z.

Random numbers come from a counter-based SplitMix64 generator so scenes are
identical across platforms for the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import Isometry3, StereoRig, project_points
from .model import KeypointWD

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def splitmix64(seed: int, counters: np.ndarray) -> np.ndarray:
    """Outputs ``counters`` (0-based) of the SplitMix64 stream started at ``seed``.

    Output ``k`` equals the ``k+1``-th call of the classic sequential generator:
    ``state += 0x9E3779B97F4A7C15`` followed by the two xor-shift-multiply rounds.
    """
    k = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK64) + (k + np.uint64(1)) * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Sequential view of :func:`splitmix64` with uniform and normal draws."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self.position = 0

    def uint64(self, n: int) -> np.ndarray:
        out = splitmix64(self.seed, np.arange(self.position, self.position + n, dtype=np.uint64))
        self.position += n
        return out

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Uniform on ``[low, high)`` with 53-bit resolution."""
        u = (self.uint64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return low + (high - low) * u

    def normal(self, n: int) -> np.ndarray:
        """Standard normals by the Box-Muller transform."""
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)  # (0, 1]
        u2 = self.uniform(m)
        radius = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([radius * np.cos(2.0 * np.pi * u2), radius * np.sin(2.0 * np.pi * u2)])
        return z[:n]

    def integers(self, n: int, low: int, high: int) -> np.ndarray:
        """Integers on ``[low, high)``."""
        return low + (self.uint64(n) % np.uint64(high - low)).astype(np.int64)


TRAJECTORY_KINDS = ("straight", "arc", "loop", "turns")

# stamp layout: ring offsets clockwise from the top-left neighbour
_RING = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))
# within 60 of the background so ring pixels never outscore the centre in FAST
_PALETTE = np.array([68, 84, 100, 116, 140, 156, 172, 188], dtype=np.uint8)
BACKGROUND = 128
_STAMP_OFFSETS = [(dr, dc) for dr in range(-2, 3) for dc in range(-2, 3)]


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    trajectory: str = "straight"
    length: float = 100.0  # path length (m)
    speed: float = 10.0  # m/s
    rate: float = 10.0  # frames per second
    # arc radius (m); for "turns" the radius of each 90 degree turn
    radius: float = 100.0
    # straight run between turns for "turns" (m)
    segment_length: float = 100.0
    # "loop": number of times the circle is driven; its circumference is length / laps
    laps: int = 1
    point_count: int = 4000
    lateral_min: float = 4.0  # corridor half-width free of points (m)
    lateral_max: float = 25.0
    height_min: float = -4.0  # y is down: negative values are above the camera
    height_max: float = 1.5
    min_depth: float = 1.0
    # intrinsics (pixels) and metric baseline (m)
    fx: float = 718.856
    fy: float = 718.856
    cx: float = 607.1928
    cy: float = 185.2157
    baseline: float = 0.54
    width: int = 1241
    height: int = 376
    noise_sigma: float = 0.0  # keypoint noise (pixels)
    quantize: bool = False  # round keypoints to integer pixels
    outlier_fraction: float = 0.0
    occlusion: bool = False  # omit keypoints hidden behind nearer stamps

    def __post_init__(self):
        if self.trajectory not in TRAJECTORY_KINDS:
            raise ValueError(f"trajectory must be one of {TRAJECTORY_KINDS}")
        if self.point_count < 1:
            raise ValueError("point_count must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 <= self.outlier_fraction < 1:
            raise ValueError("outlier_fraction must be in [0, 1)")
        if self.laps < 1:
            raise ValueError("laps must be >= 1")
        if not (self.length > 0 and self.speed > 0 and self.rate > 0):
            raise ValueError("length, speed and rate must be positive")

    @property
    def step(self) -> float:
        return self.speed / self.rate

    @property
    def frame_count(self) -> int:
        return int(round(self.length / self.step)) + 1

    def rig(self) -> StereoRig:
        return StereoRig.from_intrinsics(self.fx, self.fy, self.cx, self.cy, self.baseline,
                                         self.width, self.height)


def parse_scene_spec(text: str) -> SceneSpec:
    """``SceneSpec`` from ``key = value`` lines (``#`` starts a comment)."""
    types = {f.name: f.type for f in fields(SceneSpec)}
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"line {n}: unknown scene key {key!r}")
        values[key] = _coerce(value, types[key], key)
    return SceneSpec(**values)


def _coerce(value: str, type_name, key: str):
    t = type_name if isinstance(type_name, str) else type_name.__name__
    try:
        if t == "bool":
            if value.lower() not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(value)
            return value.lower() in ("1", "true", "yes", "on")
        if t == "int":
            return int(value)
        if t == "float":
            return float(value)
    except ValueError:
        raise ValueError(f"invalid value {value!r} for {key}") from None
    return value


def _heading_profile(spec: SceneSpec):
    """Curvature as a function of arc length, as ``(breakpoints, curvatures)``."""
    if spec.trajectory == "straight":
        return np.array([0.0]), np.array([0.0])
    if spec.trajectory == "arc":
        return np.array([0.0]), np.array([1.0 / spec.radius])
    if spec.trajectory == "loop":
        return np.array([0.0]), np.array([2.0 * math.pi * spec.laps / spec.length])
    turn = 0.5 * math.pi * spec.radius
    starts, curvatures = [], []
    s, sign = 0.0, 1.0
    while s < spec.length + 200.0:
        starts += [s, s + spec.segment_length]
        curvatures += [0.0, sign / spec.radius]
        s += spec.segment_length + turn
        sign = -sign
    return np.array(starts), np.array(curvatures)


def path_state(spec: SceneSpec, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Position ``(N, 3)`` and heading ``(N,)`` at arc lengths ``s`` (``s < 0`` extends backwards)."""
    s = np.asarray(s, dtype=float)
    starts, kappa = _heading_profile(spec)
    if spec.trajectory == "loop":
        r = spec.length / (2.0 * math.pi * spec.laps)
        psi = s / r
        pos = np.stack([r * (1.0 - np.cos(psi)), np.zeros_like(s), r * np.sin(psi)], axis=1)
        return pos, psi
    if spec.trajectory in ("straight", "arc"):
        k = kappa[0]
        sc = np.maximum(s, 0.0)
        psi = k * sc
        if k == 0.0:
            x, z = np.zeros_like(sc), sc.copy()
        else:
            x, z = (1.0 - np.cos(psi)) / k, np.sin(psi) / k
        pos = np.stack([x, np.zeros_like(s), z], axis=1)
        back = s < 0
        pos[back] = np.stack([np.zeros(back.sum()), np.zeros(back.sum()), s[back]], axis=1)
        return pos, psi
    # piecewise constant curvature: exact arcs segment by segment
    ends = np.append(starts[1:], np.inf)
    x0, z0, psi0 = [0.0], [0.0], [0.0]
    for a, b, k in zip(starts[:-1], ends[:-1], kappa[:-1]):
        x, z, p = _advance(x0[-1], z0[-1], psi0[-1], k, b - a)
        x0.append(x)
        z0.append(z)
        psi0.append(p)
    seg = np.clip(np.searchsorted(starts, np.maximum(s, 0.0), side="right") - 1, 0, len(starts) - 1)
    pos = np.zeros((len(s), 3))
    psi = np.zeros(len(s))
    for i, si in enumerate(s.tolist()):
        if si < 0:
            pos[i] = (0.0, 0.0, si)
            continue
        g = seg[i]
        x, z, p = _advance(x0[g], z0[g], psi0[g], kappa[g], si - starts[g])
        pos[i] = (x, 0.0, z)
        psi[i] = p
    return pos, psi


def _advance(x: float, z: float, psi: float, k: float, ds: float) -> tuple[float, float, float]:
    if k == 0.0:
        return x + ds * math.sin(psi), z + ds * math.cos(psi), psi
    p = psi + k * ds
    return x + (math.cos(psi) - math.cos(p)) / k, z + (math.sin(p) - math.sin(psi)) / k, p


def camera_pose(position: np.ndarray, heading: float) -> Isometry3:
    """``T_c2w`` for a camera at ``position`` looking along heading ``heading`` in the x-z plane."""
    c, s = math.cos(heading), math.sin(heading)
    rotation = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return Isometry3(rotation, np.asarray(position, dtype=float))


@dataclass
class Scene:
    spec: SceneSpec
    points: np.ndarray  # (N, 3) world coordinates
    poses: list[Isometry3]  # T_c2w per frame
    descriptors: list[int]  # one random 256-bit descriptor per point
    codes: np.ndarray  # (N, 8) palette indices of each point's stamp ring

    @property
    def timestamps(self) -> np.ndarray:
        return np.arange(len(self.poses)) / self.spec.rate


def _stamp_codes(n: int) -> np.ndarray:
    """Distinct 24-bit ring codes (bijective in the point index), as 8 palette indices."""
    code = (np.arange(n, dtype=np.int64) * 0x9E3779 + 0x5A5A5A) & 0xFFFFFF
    return np.stack([(code >> (3 * k)) & 7 for k in range(8)], axis=1)


def generate_scene(spec: SceneSpec) -> Scene:
    """World points and ground-truth camera poses, deterministic in ``spec.seed``."""
    n_frames = spec.frame_count
    s = np.arange(n_frames) * spec.step
    pos, psi = path_state(spec, s)
    poses = [camera_pose(p, h) for p, h in zip(pos, psi)]
    if spec.trajectory == "loop":
        poses[-1] = poses[0] if abs(s[-1] - spec.length) < 1e-9 else poses[-1]

    rng = SplitMix64(spec.seed)
    n = spec.point_count
    if spec.trajectory == "loop":
        along = rng.uniform(n, 0.0, spec.length / spec.laps)
    else:
        along = rng.uniform(n, -20.0, spec.length + 80.0)
    side = np.where(rng.uniform(n) < 0.5, -1.0, 1.0)
    lateral = side * rng.uniform(n, spec.lateral_min, spec.lateral_max)
    height = rng.uniform(n, spec.height_min, spec.height_max)
    base, heading = path_state(spec, along)
    right = np.stack([np.cos(heading), np.zeros(n), -np.sin(heading)], axis=1)
    points = base + lateral[:, None] * right
    points[:, 1] = height

    words = SplitMix64(spec.seed ^ 0x5DEECE66D).uint64(4 * n).reshape(n, 4)
    descriptors = [int(w[0]) | int(w[1]) << 64 | int(w[2]) << 128 | int(w[3]) << 192
                   for w in words.tolist()]
    return Scene(spec, points, poses, descriptors, _stamp_codes(n))


@dataclass
class RenderedFrame:
    index: int
    pose: Isometry3  # T_c2w
    keypoints_L: list[KeypointWD]
    keypoints_R: list[KeypointWD]
    labels: np.ndarray  # world point index of keypoint i (left and right lists are parallel)
    outlier: np.ndarray  # keypoint i was displaced away from its true projection
    image_L: Optional[np.ndarray] = None
    image_R: Optional[np.ndarray] = None
    _lookup: dict = field(default_factory=dict, repr=False)

    def sampler(self, r: float, c: float):
        """Left keypoint within one pixel of ``(r, c)``, as ``(r, c, descriptor)``, else None."""
        ri, ci = int(round(r)), int(round(c))
        best, best_d = None, 1.0
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                for k in self._lookup.get((ri + dr, ci + dc), ()):
                    kp = self.keypoints_L[k]
                    d = math.hypot(kp.r - r, kp.c - c)
                    if d <= best_d:
                        best, best_d = kp, d
        return None if best is None else (best.r, best.c, best.d)


def visible_points(scene: Scene, pose: Isometry3) -> dict:
    """Exact projections of the points visible in both cameras at ``pose``."""
    spec = scene.spec
    rig = spec.rig()
    p_c = pose.inverse() @ scene.points
    rows, c_l, depth = project_points(p_c, rig.cam_L.P)
    _, c_r, _ = project_points(p_c, rig.cam_R.P)
    with np.errstate(invalid="ignore"):
        ok = ((depth > spec.min_depth) & (rows >= 0) & (rows <= spec.height - 1)
              & (c_l >= 0) & (c_l <= spec.width - 1) & (c_r >= 0) & (c_r <= spec.width - 1)
              & (c_l - c_r >= 1.0))
    idx = np.flatnonzero(ok)
    return {"index": idx, "p_c": p_c[idx], "r": rows[idx], "c_L": c_l[idx], "c_R": c_r[idx],
            "depth": depth[idx]}


def _zbuffer(shape, rows, cols, depth) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Depth buffer of the 5x5 stamps; returns the buffer and stamp pixel coordinates."""
    dr = np.array([o[0] for o in _STAMP_OFFSETS])
    dc = np.array([o[1] for o in _STAMP_OFFSETS])
    rr = rows[:, None] + dr
    cc = cols[:, None] + dc
    inside = (rr >= 0) & (rr < shape[0]) & (cc >= 0) & (cc < shape[1])
    zbuf = np.full(shape, np.inf)
    np.minimum.at(zbuf, (rr[inside], cc[inside]), np.broadcast_to(depth[:, None], rr.shape)[inside])
    return zbuf, rr, cc


def _paint(shape, rows, cols, depth, codes) -> tuple[np.ndarray, np.ndarray]:
    """Render stamps nearest-wins; returns the image and whether each centre stayed visible."""
    zbuf, rr, cc = _zbuffer(shape, rows, cols, depth)
    values = np.full(rr.shape, BACKGROUND, dtype=np.uint8)
    centre = _STAMP_OFFSETS.index((0, 0))
    values[:, centre] = 255
    for k, (dr, dc) in enumerate(_RING):
        values[:, _STAMP_OFFSETS.index((dr, dc))] = _PALETTE[codes[:, k]]
    inside = (rr >= 0) & (rr < shape[0]) & (cc >= 0) & (cc < shape[1])
    owner = inside.copy()
    owner[inside] = zbuf[rr[inside], cc[inside]] == np.broadcast_to(depth[:, None], rr.shape)[inside]
    image = np.full(shape, BACKGROUND, dtype=np.uint8)
    image[rr[owner], cc[owner]] = values[owner]
    return image, owner[:, centre]


def render_frame(scene: Scene, index: int, *, images: bool = False,
                 spec: Optional[SceneSpec] = None) -> RenderedFrame:
    """Keypoints (and optionally images) of frame ``index``.

    Noise and outliers are drawn from a stream keyed by ``(seed, index)`` for
    every world point, so they do not depend on which points are visible.
    Outliers are shifted by the same random 10-40 px row and 50-150 px column
    offset in both images, keeping a consistent but wrong stereo pair.
    """
    spec = spec or scene.spec
    pose = scene.poses[index]
    vis = visible_points(scene, pose)
    idx = vis["index"]
    r, c_l, c_r = vis["r"].copy(), vis["c_L"].copy(), vis["c_R"].copy()
    n_all = len(scene.points)

    rng = SplitMix64(splitmix64(spec.seed, np.array([index + 1], dtype=np.uint64))[0])
    noise = rng.normal(3 * n_all).reshape(3, n_all)[:, idx]
    flags = rng.uniform(n_all)[idx] < spec.outlier_fraction
    offsets = rng.uniform(4 * n_all).reshape(4, n_all)[:, idx]

    if spec.noise_sigma > 0:
        r += spec.noise_sigma * noise[0]
        c_l += spec.noise_sigma * noise[1]
        c_r += spec.noise_sigma * noise[2]
    if flags.any():
        d_r = np.where(offsets[0] < 0.5, -1.0, 1.0) * (10.0 + 30.0 * offsets[1])
        d_c = np.where(offsets[2] < 0.5, -1.0, 1.0) * (50.0 + 100.0 * offsets[3])
        h, w = spec.height, spec.width
        d_r = np.where((r + d_r < 0) | (r + d_r > h - 1), -d_r, d_r)
        d_c = np.where((c_l + d_c > w - 1) | (c_r + d_c < 0), -d_c, d_c)
        r = np.where(flags, r + d_r, r)
        c_l = np.where(flags, c_l + d_c, c_l)
        c_r = np.where(flags, c_r + d_c, c_r)
    # noise may push a point across the border
    keep = ((r >= 0) & (r <= spec.height - 1) & (c_l >= 0) & (c_l <= spec.width - 1)
            & (c_r >= 0) & (c_l - c_r >= 1.0))

    shape = (spec.height, spec.width)
    img_l = img_r = None
    if images or spec.occlusion:
        rows_i = np.rint(vis["r"]).astype(np.int64)
        img_l, seen_l = _paint(shape, rows_i, np.rint(vis["c_L"]).astype(np.int64),
                               vis["depth"], scene.codes[idx])
        img_r, seen_r = _paint(shape, rows_i, np.rint(vis["c_R"]).astype(np.int64),
                               vis["depth"], scene.codes[idx])
        if spec.occlusion:
            keep &= seen_l & seen_r
    if spec.quantize:
        r, c_l, c_r = np.rint(r), np.rint(c_l), np.rint(c_r)

    sel = np.flatnonzero(keep)
    inv_depth = 1.0 / vis["depth"]
    kl, kr = [], []
    for i in sel.tolist():
        d = scene.descriptors[idx[i]]
        response = float(inv_depth[i])
        kl.append(KeypointWD(float(r[i]), float(c_l[i]), response, d))
        kr.append(KeypointWD(float(r[i]), float(c_r[i]), response, d))
    frame = RenderedFrame(index, pose, kl, kr, idx[sel], flags[sel],
                          img_l if images else None, img_r if images else None)
    for k, kp in enumerate(kl):
        frame._lookup.setdefault((int(round(kp.r)), int(round(kp.c))), []).append(k)
    return frame


def export_kitti(scene: Scene, out_dir, *, start: int = 0, stop: Optional[int] = None) -> Path:
    """Write rendered images, calibration, timestamps and ground truth in KITTI layout."""
    from .dataset import format_calibration, write_pgm, write_trajectory

    out = Path(out_dir)
    (out / "image_0").mkdir(parents=True, exist_ok=True)
    (out / "image_1").mkdir(parents=True, exist_ok=True)
    stop = len(scene.poses) if stop is None else stop
    for i in range(start, stop):
        frame = render_frame(scene, i, images=True)
        write_pgm(out / "image_0" / f"{i:06d}.pgm", frame.image_L)
        write_pgm(out / "image_1" / f"{i:06d}.pgm", frame.image_R)
    (out / "calib.txt").write_text(format_calibration(scene.spec.rig()))
    (out / "times.txt").write_text("".join(f"{t:.6f}\n" for t in scene.timestamps[start:stop]))
    write_trajectory(scene.poses[start:stop], out / "poses.txt")
    return out
