"""Image and sequence input, trajectory files.

Sequences use the KITTI odometry layout::

    <seq>/image_0/000000.pgm   left images (.pgm, or .png when Pillow is installed)
    <seq>/image_1/000000.pgm   right images, same file names
    <seq>/times.txt            one timestamp (s) per frame
    <seq>/calib.txt            "P0: 12 reals" and "P1: 12 reals" projection rows
    <seq>/poses.txt            optional ground truth (also <root>/poses/<id>.txt)
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .geometry import Camera, GeometryError, Isometry3, StereoRig

PathLike = Union[str, Path]
IMAGE_SUFFIXES = (".pgm", ".png")


class DatasetError(Exception):
    """A sequence or file could not be loaded."""


def _pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """First ``count`` header integers and the offset just past the last one's whitespace."""
    tokens = []
    pos = 2
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DatasetError("truncated PGM header")
        tokens.append(int(data[start:pos]))
    return tokens, pos + 1


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode an 8-bit binary (P5) or plain (P2) PGM into a ``(height, width)`` uint8 array."""
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise DatasetError(f"not a PGM file (magic {magic!r})")
    try:
        (width, height, maxval), offset = _pgm_tokens(data, 3)
    except ValueError as exc:
        raise DatasetError(f"malformed PGM header: {exc}") from None
    if width <= 0 or height <= 0 or not 0 < maxval <= 255:
        raise DatasetError(f"unsupported PGM geometry {width}x{height}, maxval {maxval}")
    if magic == b"P5":
        if len(data) - offset < width * height:
            raise DatasetError("PGM pixel data is truncated")
        pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=offset)
    else:
        values = data[offset:].split()
        if len(values) < width * height:
            raise DatasetError("PGM pixel data is truncated")
        pixels = np.array([int(v) for v in values[:width * height]], dtype=np.uint8)
    return pixels.reshape(height, width).copy()


def read_pgm(path: PathLike) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def write_pgm(path: PathLike, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM images must be two-dimensional")
    img = np.clip(img, 0, 255).astype(np.uint8)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def load_image(path: PathLike) -> np.ndarray:
    """Grayscale 8-bit image; PGM natively, other formats through Pillow if available."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"image not found: {path}")
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    try:
        from PIL import Image
    except ImportError:
        raise DatasetError(f"reading {path.suffix} images requires Pillow") from None
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8).copy()


def image_size(path: PathLike) -> tuple[int, int]:
    """``(width, height)`` of an image file."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        with open(path, "rb") as fh:
            head = fh.read(512)
        if head[:2] not in (b"P5", b"P2"):
            raise DatasetError(f"not a PGM file: {path}")
        (w, h), _ = _pgm_tokens(head, 2)
        return w, h
    h, w = load_image(path).shape
    return w, h


def parse_calibration(text: str) -> tuple[np.ndarray, np.ndarray]:
    """3x4 projection matrices ``P0`` (left) and ``P1`` (right) from KITTI ``calib.txt``."""
    rows = {}
    for line in text.splitlines():
        if ":" not in line:
            continue
        key, values = line.split(":", 1)
        try:
            rows[key.strip()] = np.array([float(v) for v in values.split()])
        except ValueError:
            raise DatasetError(f"malformed calibration row {key.strip()!r}") from None
    for key in ("P0", "P1"):
        if key not in rows or rows[key].size != 12:
            raise DatasetError(f"calibration row {key} missing or not 12 values")
    return rows["P0"].reshape(3, 4), rows["P1"].reshape(3, 4)


def rig_from_projections(p0: np.ndarray, p1: np.ndarray, width: int, height: int) -> StereoRig:
    fx, fy, cx, cy = p0[0, 0], p0[1, 1], p0[0, 2], p0[1, 2]
    if not np.isclose(p1[0, 0], fx) or not np.isclose(p1[1, 1], fy) or not np.isclose(p1[1, 2], cy):
        raise DatasetError("calibration is not rectified: left and right intrinsics differ")
    B = -p1[0, 3]
    if not B > 0:
        raise DatasetError(f"calibration baseline term must be positive, got {B}")
    try:
        left = Camera(fx, fy, cx, cy, width, height, p0)
        right = Camera(p1[0, 0], p1[1, 1], p1[0, 2], p1[1, 2], width, height, p1)
        return StereoRig(left, right, B)
    except GeometryError as exc:
        raise DatasetError(f"invalid calibration: {exc}") from None


def format_calibration(rig: StereoRig) -> str:
    lines = []
    for key, cam in (("P0", rig.cam_L), ("P1", rig.cam_R)):
        lines.append(f"{key}: " + " ".join(f"{v:.17g}" for v in cam.P.reshape(-1)))
    return "\n".join(lines) + "\n"


@dataclass
class SequenceManifest:
    left_images: list[Path]
    right_images: list[Path]
    timestamps: np.ndarray
    rig: StereoRig
    ground_truth: Optional[list[Isometry3]] = None
    name: str = ""

    def __post_init__(self):
        if len(self.left_images) != len(self.right_images):
            raise DatasetError("left and right image counts differ")
        if len(self.timestamps) != len(self.left_images):
            raise DatasetError("timestamp count differs from image count")
        if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise DatasetError("timestamps are not strictly increasing")
        if self.ground_truth is not None and len(self.ground_truth) != len(self.left_images):
            raise DatasetError("ground-truth pose count differs from image count")

    def __len__(self) -> int:
        return len(self.left_images)

    def load_pair(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        return load_image(self.left_images[index]), load_image(self.right_images[index])


def _sequence_dir(root: Path, sequence: str) -> Path:
    for cand in (root / "sequences" / sequence, root / sequence, root):
        if (cand / "image_0").is_dir():
            return cand
    raise DatasetError(f"no sequence {sequence!r} under {root} (expected an image_0/ directory)")


def load_kitti_sequence(root: PathLike, sequence: str = "") -> SequenceManifest:
    """Index a KITTI-layout stereo sequence; images are read on demand."""
    root = Path(root)
    seq_dir = _sequence_dir(root, str(sequence))
    left_dir, right_dir = seq_dir / "image_0", seq_dir / "image_1"
    if not right_dir.is_dir():
        raise DatasetError(f"missing right image directory {right_dir}")
    left = sorted(p for p in left_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not left:
        raise DatasetError(f"no images in {left_dir}")
    right = []
    for i, p in enumerate(left):
        q = right_dir / p.name
        if not q.is_file():
            raise DatasetError(f"missing right image for frame {i}: {q}")
        right.append(q)

    for name in ("times.txt", "calib.txt"):
        if not (seq_dir / name).is_file():
            raise DatasetError(f"missing {seq_dir / name}")
    try:
        times = np.loadtxt(seq_dir / "times.txt", ndmin=1, dtype=float)
    except ValueError as exc:
        raise DatasetError(f"malformed times.txt: {exc}") from None
    if len(times) != len(left):
        raise DatasetError(f"times.txt has {len(times)} entries for {len(left)} images")

    p0, p1 = parse_calibration((seq_dir / "calib.txt").read_text())
    w, h = image_size(left[0])
    rig = rig_from_projections(p0, p1, w, h)

    truth = None
    candidates = [seq_dir / "poses.txt"]
    if sequence:
        candidates += [root / "poses" / f"{sequence}.txt",
                       seq_dir.parent.parent / "poses" / f"{sequence}.txt"]
    for cand in candidates:
        if cand.is_file():
            truth = read_trajectory(cand)
            break
    return SequenceManifest(left, right, times, rig, truth, name=str(sequence) or seq_dir.name)


def _format_pose(t: Isometry3) -> str:
    m = np.hstack([t.rotation, t.translation[:, None]]).reshape(-1) + 0.0
    return " ".join(f"{v:.17g}" for v in m)


def write_trajectory(poses: Sequence[Isometry3], path: PathLike) -> None:
    """KITTI pose file: the upper 3x4 of each ``T_c2w``, row-major, one frame per line."""
    text = "".join(_format_pose(t) + "\n" for t in poses)
    Path(path).write_text(text)


def read_trajectory(path: PathLike) -> list[Isometry3]:
    poses = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            values = np.array([float(v) for v in line.split()])
        except ValueError:
            raise DatasetError(f"{path}:{n}: non-numeric pose entry") from None
        if values.size != 12:
            raise DatasetError(f"{path}:{n}: expected 12 values, got {values.size}")
        poses.append(Isometry3.from_matrix(values.reshape(3, 4)))
    return poses
