"""Keypoint detection, grid regularization and binary descriptors.

Detection is FAST-9 on the 16-pixel Bresenham circle of radius 3. A pixel is
a corner when at least nine contiguous circle pixels are all brighter than
``center + threshold`` or all darker than ``center - threshold``. Its response
is the sum of ``|circle - center|`` over the contiguous arc that passed.
Corners survive non-maximum suppression when no 8-neighbour has a strictly
larger response.

Descriptors are 256-bit BRIEF strings over a 5x5 box-smoothed image, sampled
with the fixed pattern in :mod:`stereoslam._brief_pattern`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from ._brief_pattern import PATTERN
from .model import KeypointWD

DESCRIPTOR_BITS = 256
DESCRIPTOR_BYTES = DESCRIPTOR_BITS // 8
BRIEF_BORDER = 20

# (dr, dc), clockwise from 12 o'clock
CIRCLE = (
    (-3, 0), (-3, 1), (-2, 2), (-1, 3), (0, 3), (1, 3), (2, 2), (3, 1),
    (3, 0), (3, -1), (2, -2), (1, -3), (0, -3), (-1, -3), (-2, -2), (-3, -1),
)
_CIRCLE_DR = np.array([p[0] for p in CIRCLE])
_CIRCLE_DC = np.array([p[1] for p in CIRCLE])
_BIT_WEIGHTS = np.int64(1) << np.arange(16, dtype=np.int64)
_NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))

_PATTERN = np.array(PATTERN, dtype=np.int64)
_PA_R, _PA_C, _PB_R, _PB_C = (_PATTERN[:, i] for i in range(4))


class UnextractableKeypoint(ValueError):
    """Keypoint too close to the image border for a full descriptor patch."""


@dataclass(frozen=True)
class DetectorState:
    threshold: int = 20
    target_count: int = 700
    band: float = 0.2
    min_threshold: int = 5
    max_threshold: int = 100

    def __post_init__(self):
        if not self.min_threshold <= self.threshold <= self.max_threshold:
            raise ValueError("threshold outside [min_threshold, max_threshold]")


def adapt_threshold(state: DetectorState, detected_count: int, step: int = 2) -> DetectorState:
    """Raise the threshold when too many corners were found, lower it when too few."""
    t = state.threshold
    if detected_count > state.target_count * (1.0 + state.band):
        t += step
    elif detected_count < state.target_count * (1.0 - state.band):
        t -= step
    t = min(max(t, state.min_threshold), state.max_threshold)
    return replace(state, threshold=t)


def _arc_coverage(bits: np.ndarray) -> np.ndarray:
    """16-bit mask of circle positions lying on a contiguous run of >= 9 set bits."""
    x = bits | (bits << 16)
    starts = x.copy()
    for i in range(1, 9):
        starts &= x >> i
    cover = np.zeros_like(bits)
    for i in range(9):
        cover |= starts << i
    return (cover | (cover >> 16)) & 0xFFFF


def fast_corners(image: np.ndarray, threshold: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Array form of :func:`detect_fast`: ``(rows, cols, responses)`` after suppression."""
    img = np.asarray(image)
    h, w = img.shape
    empty = (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64))
    if h < 7 or w < 7:
        return empty
    I = img.astype(np.int16)
    center = I[3:h - 3, 3:w - 3]
    n_bright = np.zeros(center.shape, np.int8)
    n_dark = np.zeros(center.shape, np.int8)
    # any 9-arc of the 16-circle covers at least two of the four compass pixels
    for k in (0, 4, 8, 12):
        dr, dc = CIRCLE[k]
        d = I[3 + dr:h - 3 + dr, 3 + dc:w - 3 + dc] - center
        n_bright += d > threshold
        n_dark += d < -threshold
    rr, cc = np.nonzero((n_bright >= 2) | (n_dark >= 2))
    if rr.size == 0:
        return empty
    rr = rr + 3
    cc = cc + 3
    ring = I[rr[:, None] + _CIRCLE_DR, cc[:, None] + _CIRCLE_DC].astype(np.int64)
    diff = ring - I[rr, cc].astype(np.int64)[:, None]
    absdiff = np.abs(diff)
    response = np.zeros(rr.size, np.int64)
    for passing in (diff > threshold, diff < -threshold):
        cover = _arc_coverage(passing.astype(np.int64) @ _BIT_WEIGHTS)
        on_arc = (cover[:, None] & _BIT_WEIGHTS) != 0
        response += (absdiff * on_arc).sum(axis=1)
    keep = response > 0
    rr, cc, response = rr[keep], cc[keep], response[keep]
    if rr.size == 0:
        return empty

    score = np.zeros((h, w), np.int64)
    score[rr, cc] = response
    is_max = np.ones(rr.size, bool)
    for dr, dc in _NEIGHBOURS:
        is_max &= response >= score[rr + dr, cc + dc]
    return rr[is_max], cc[is_max], response[is_max]


def detect_fast(image: np.ndarray, threshold: int) -> list[KeypointWD]:
    """FAST-9 corners of an 8-bit image, sorted by (row, column); descriptors unset."""
    rows, cols, resp = fast_corners(image, threshold)
    return [KeypointWD(int(r), int(c), float(s)) for r, c, s in zip(rows, cols, resp)]


def regularize_indices(rows: np.ndarray, cols: np.ndarray, responses: np.ndarray,
                       bin_size: int) -> np.ndarray:
    """Indices of the strongest keypoint per grid cell (ties: lowest (r, c))."""
    if bin_size < 1:
        raise ValueError("bin_size must be >= 1")
    rows = np.asarray(rows)
    if rows.size == 0:
        return np.zeros(0, np.int64)
    cols = np.asarray(cols)
    cell_r = np.floor(rows / bin_size).astype(np.int64)
    cell_c = np.floor(cols / bin_size).astype(np.int64)
    key = cell_r * (int(cell_c.max()) + 1) + cell_c
    order = np.lexsort((cols, rows, -np.asarray(responses, dtype=float)))
    _, first = np.unique(key[order], return_index=True)
    return np.sort(order[first])


def regularize_grid(keypoints: Sequence[KeypointWD], bin_size: int,
                    image_shape: Optional[tuple[int, int]] = None) -> list[KeypointWD]:
    """Keep only the highest-response keypoint in each ``bin_size`` grid cell.

    ``image_shape`` is accepted for interface symmetry; cells are anchored at
    the image origin, so it does not change the result.
    """
    if bin_size < 1:
        raise ValueError("bin_size must be >= 1")
    if not keypoints:
        return []
    idx = regularize_indices(np.array([k.r for k in keypoints]), np.array([k.c for k in keypoints]),
                             np.array([k.response for k in keypoints]), bin_size)
    return [keypoints[i] for i in idx]


def hamming_distance(d1: int, d2: int) -> int:
    return (d1 ^ d2).bit_count()


def pack_descriptors(descriptors: Iterable[int]) -> np.ndarray:
    """Python-int descriptors to an ``(N, 32)`` uint8 array (little-endian bits)."""
    buf = b"".join(d.to_bytes(DESCRIPTOR_BYTES, "little") for d in descriptors)
    return np.frombuffer(buf, dtype=np.uint8).reshape(-1, DESCRIPTOR_BYTES).copy()


def unpack_descriptors(arr: np.ndarray) -> list[int]:
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    return [int.from_bytes(row.tobytes(), "little") for row in arr]


def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All-pairs Hamming distances between packed descriptor arrays."""
    return np.bitwise_count(a[:, None, :] ^ b[None, :, :]).sum(axis=2, dtype=np.int64)


class DescriptorImage:
    """An image prepared for descriptor extraction (integral image of intensities)."""

    def __init__(self, image: np.ndarray):
        img = np.asarray(image)
        self.shape = img.shape
        s = np.zeros((img.shape[0] + 1, img.shape[1] + 1), np.int64)
        np.cumsum(np.cumsum(img, axis=0, dtype=np.int64), axis=1, out=s[1:, 1:])
        self._integral = s

    def _box(self, r: np.ndarray, c: np.ndarray) -> np.ndarray:
        s = self._integral
        return s[r + 3, c + 3] - s[r - 2, c + 3] - s[r + 3, c - 2] + s[r - 2, c - 2]

    def extractable(self, rows, cols) -> np.ndarray:
        h, w = self.shape
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        return ((rows >= BRIEF_BORDER) & (rows < h - BRIEF_BORDER)
                & (cols >= BRIEF_BORDER) & (cols < w - BRIEF_BORDER))

    def describe(self, rows, cols) -> np.ndarray:
        """Packed ``(N, 32)`` descriptors; every location must be extractable."""
        rows = np.asarray(rows, dtype=np.int64)[:, None]
        cols = np.asarray(cols, dtype=np.int64)[:, None]
        bits = self._box(rows + _PA_R, cols + _PA_C) < self._box(rows + _PB_R, cols + _PB_C)
        return np.packbits(bits, axis=1, bitorder="little")

    def sample(self, r: float, c: float) -> Optional[tuple[int, int, int]]:
        """Descriptor at the rounded location, or None near the border."""
        ri, ci = int(round(r)), int(round(c))
        if not self.extractable(ri, ci):
            return None
        return ri, ci, unpack_descriptors(self.describe([ri], [ci]))[0]


def extract_brief(image: np.ndarray, keypoint: KeypointWD) -> int:
    """256-bit descriptor of one keypoint."""
    di = image if isinstance(image, DescriptorImage) else DescriptorImage(image)
    r, c = int(keypoint.r), int(keypoint.c)
    if not di.extractable(r, c):
        raise UnextractableKeypoint(f"keypoint ({r}, {c}) within {BRIEF_BORDER} px of the border")
    return unpack_descriptors(di.describe([r], [c]))[0]


def extract_descriptors(image, keypoints: Sequence[KeypointWD]) -> list[KeypointWD]:
    """Set ``d`` on every extractable keypoint; the others are dropped."""
    di = image if isinstance(image, DescriptorImage) else DescriptorImage(image)
    if not keypoints:
        return []
    rows = np.array([k.r for k in keypoints], dtype=np.int64)
    cols = np.array([k.c for k in keypoints], dtype=np.int64)
    ok = di.extractable(rows, cols)
    kept = [k for k, good in zip(keypoints, ok) if good]
    for k, d in zip(kept, unpack_descriptors(di.describe(rows[ok], cols[ok]))):
        k.d = d
    return kept
