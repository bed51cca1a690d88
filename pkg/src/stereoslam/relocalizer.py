"""Loop closing: descriptor tree over local maps, candidate search, ICP and validation."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .frontend import DESCRIPTOR_BITS, pack_descriptors
from .geometry import Isometry3, skew, so3_exp
from .model import LocalMap, WorldMap


class AlignmentDegenerate(ValueError):
    """Too few inliers left to estimate a rigid transform."""


def _as_packed(descriptors) -> np.ndarray:
    if isinstance(descriptors, np.ndarray):
        return np.ascontiguousarray(descriptors, dtype=np.uint8).reshape(-1, DESCRIPTOR_BITS // 8)
    return pack_descriptors(descriptors)


def _bits(packed: np.ndarray) -> np.ndarray:
    return np.unpackbits(packed, axis=1, bitorder="little").astype(bool)


class HBSTNode:
    """Internal node (``bit >= 0``) or leaf holding parallel entry arrays."""

    __slots__ = ("bit", "left", "right", "depth", "descriptors", "landmark_ids", "map_ids")

    def __init__(self, depth: int):
        self.bit = -1
        self.left: Optional[HBSTNode] = None
        self.right: Optional[HBSTNode] = None
        self.depth = depth
        self.descriptors = np.zeros((0, DESCRIPTOR_BITS // 8), np.uint8)
        self.landmark_ids = np.zeros(0, np.int64)
        self.map_ids = np.zeros(0, np.int64)

    @property
    def is_leaf(self) -> bool:
        return self.bit < 0


@dataclass(frozen=True)
class TreeMatch:
    query: int
    landmark_id: int
    map_id: int
    distance: int


class HBSTTree:
    """Binary search tree over descriptor bits.

    Leaves hold at most ``max_leaf_size`` entries unless they sit at
    ``max_depth`` or no unused bit separates their descriptors. A split uses the
    unused bit whose mean over the leaf is closest to 0.5; descriptors with that
    bit 0 go left. Queries descend a single path and compare against one leaf.
    """

    def __init__(self, max_leaf_size: int = 100, max_depth: int = 16):
        if max_leaf_size < 1 or max_depth < 0:
            raise ValueError("max_leaf_size must be >= 1 and max_depth >= 0")
        self.max_leaf_size = max_leaf_size
        self.max_depth = max_depth
        self.root = HBSTNode(0)
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def insert(self, descriptors, landmark_ids, map_ids) -> None:
        packed = _as_packed(descriptors)
        lm = np.asarray(landmark_ids, dtype=np.int64).reshape(-1)
        mp = np.broadcast_to(np.asarray(map_ids, dtype=np.int64), lm.shape).copy()
        if not len(packed) == len(lm):
            raise ValueError("descriptor and id counts differ")
        if len(packed):
            self._insert(self.root, packed, _bits(packed), lm, mp, frozenset())
            self.size += len(packed)

    def _insert(self, node, packed, bits, lm, mp, used) -> None:
        if not node.is_leaf:
            go_right = bits[:, node.bit]
            used = used | {node.bit}
            for child, sel in ((node.left, ~go_right), (node.right, go_right)):
                if sel.any():
                    self._insert(child, packed[sel], bits[sel], lm[sel], mp[sel], used)
            return
        node.descriptors = np.concatenate([node.descriptors, packed])
        node.landmark_ids = np.concatenate([node.landmark_ids, lm])
        node.map_ids = np.concatenate([node.map_ids, mp])
        self._maybe_split(node, used)

    def _maybe_split(self, node: HBSTNode, used: frozenset) -> None:
        if len(node.landmark_ids) <= self.max_leaf_size or node.depth >= self.max_depth:
            return
        bits = _bits(node.descriptors)
        score = np.abs(bits.mean(axis=0) - 0.5)
        if used:
            score[list(used)] = np.inf
        bit = int(np.argmin(score))
        if not score[bit] < 0.5:
            return
        go_right = bits[:, bit]
        node.bit = bit
        node.left, node.right = HBSTNode(node.depth + 1), HBSTNode(node.depth + 1)
        for child, sel in ((node.left, ~go_right), (node.right, go_right)):
            child.descriptors = node.descriptors[sel]
            child.landmark_ids = node.landmark_ids[sel]
            child.map_ids = node.map_ids[sel]
        node.descriptors = node.descriptors[:0]
        node.landmark_ids = node.landmark_ids[:0]
        node.map_ids = node.map_ids[:0]
        for child in (node.left, node.right):
            self._maybe_split(child, used | {bit})

    def query(self, descriptors, max_distance: int = 25, *, max_map_id: Optional[int] = None,
              exclude_landmarks=None) -> list[TreeMatch]:
        """Best leaf entry strictly closer than ``max_distance`` for each query.

        ``max_map_id`` restricts the search to entries of maps up to that id;
        ``exclude_landmarks`` (one id per query) skips entries of the same landmark.
        """
        packed = _as_packed(descriptors)
        if self.size == 0 or len(packed) == 0:
            return []
        excl = (np.full(len(packed), -1, np.int64) if exclude_landmarks is None
                else np.asarray(exclude_landmarks, dtype=np.int64).reshape(-1))
        out: list[TreeMatch] = []
        self._query(self.root, packed, _bits(packed), np.arange(len(packed)), excl,
                    max_distance, max_map_id, out)
        out.sort(key=lambda m: m.query)
        return out

    def _query(self, node, packed, bits, qidx, excl, max_distance, max_map_id, out) -> None:
        if not node.is_leaf:
            go_right = bits[:, node.bit]
            for child, sel in ((node.left, ~go_right), (node.right, go_right)):
                if sel.any():
                    self._query(child, packed[sel], bits[sel], qidx[sel], excl[sel],
                                max_distance, max_map_id, out)
            return
        if len(node.landmark_ids) == 0:
            return
        dist = np.bitwise_count(packed[:, None, :] ^ node.descriptors[None, :, :]).sum(
            axis=2, dtype=np.int64)
        invalid = node.landmark_ids[None, :] == excl[:, None]
        if max_map_id is not None:
            invalid |= (node.map_ids > max_map_id)[None, :]
        dist = np.where(invalid | (dist >= max_distance), np.iinfo(np.int64).max, dist)
        best = np.argmin(dist, axis=1)
        best_dist = dist[np.arange(len(best)), best]
        for q, b, d in zip(qidx.tolist(), best.tolist(), best_dist.tolist()):
            if d < max_distance:
                out.append(TreeMatch(q, int(node.landmark_ids[b]), int(node.map_ids[b]), d))

    def leaves(self):
        """Yield ``(leaf, path)`` with ``path`` the list of ``(bit, went_right)`` decisions."""
        stack = [(self.root, [])]
        while stack:
            node, path = stack.pop()
            if node.is_leaf:
                yield node, path
            else:
                stack.append((node.right, path + [(node.bit, True)]))
                stack.append((node.left, path + [(node.bit, False)]))


def map_descriptors(lmap: LocalMap) -> tuple[np.ndarray, np.ndarray]:
    """Distinct ``(descriptor, landmark id)`` pairs of a local map's landmarks."""
    descs, ids = [], []
    for lm in lmap.landmarks:
        for d in dict.fromkeys(lm.descriptors):
            descs.append(d)
            ids.append(lm.id)
    return pack_descriptors(descs), np.array(ids, dtype=np.int64)


def insert_local_map(tree: HBSTTree, lmap: LocalMap) -> int:
    packed, ids = map_descriptors(lmap)
    tree.insert(packed, ids, lmap.id)
    return len(ids)


@dataclass(frozen=True)
class RelocalizerConfig:
    max_leaf_size: int = 100
    tree_max_depth: int = 16
    tree_max_distance: int = 25
    min_overlap: float = 0.15
    temporal_gap: int = 3
    icp_inlier_threshold: float = 0.5
    icp_rounds: int = 20
    closure_min_inliers: int = 25
    closure_max_mean_error: float = 0.25


@dataclass(frozen=True)
class ClosureCandidate:
    map_id: int
    overlap: float
    # (query landmark id, matched landmark id), one per query landmark
    correspondences: tuple[tuple[int, int], ...]


@dataclass(frozen=True, eq=False)
class ClosureConstraint:
    """Validated relative transform: ``p_j = T_i2j @ p_i`` for points in the maps' frames."""

    map_i: int
    map_j: int
    T_i2j: Isometry3
    inliers: int
    mean_error: float


def find_closure_candidates(world: WorldMap, current: LocalMap, tree: HBSTTree,
                            cfg: RelocalizerConfig = RelocalizerConfig()) -> list[ClosureCandidate]:
    """Past maps sharing at least ``min_overlap`` of the current map's descriptors.

    Only maps with ``id <= current.id - temporal_gap`` take part. Matches of a
    landmark against itself carry no loop information and are ignored. Several
    descriptor hits from one query landmark into a map collapse to the landmark
    hit most often (ties: first seen).
    """
    max_map_id = current.id - cfg.temporal_gap
    if max_map_id < 0:
        return []
    packed, ids = map_descriptors(current)
    if len(ids) == 0:
        return []
    matches = tree.query(packed, cfg.tree_max_distance, max_map_id=max_map_id, exclude_landmarks=ids)
    hits: dict[int, dict[int, list[int]]] = defaultdict(lambda: defaultdict(list))
    counts: Counter = Counter()
    for m in matches:
        hits[m.map_id][int(ids[m.query])].append(m.landmark_id)
        counts[m.map_id] += 1
    out = []
    for map_id in sorted(counts):
        overlap = counts[map_id] / len(ids)
        if overlap < cfg.min_overlap:
            continue
        pairs = tuple((q, Counter(targets).most_common(1)[0][0])
                      for q, targets in hits[map_id].items())
        out.append(ClosureCandidate(map_id, overlap, pairs))
    return out


def _weighted_rigid_fit(src: np.ndarray, dst: np.ndarray, w: np.ndarray) -> Isometry3:
    """Rotation and translation minimizing ``sum w |R src + t - dst|^2`` (Kabsch)."""
    wsum = w.sum()
    mu_s = w @ src / wsum
    mu_d = w @ dst / wsum
    cov = ((dst - mu_d) * w[:, None]).T @ (src - mu_s)
    u, _, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(u @ vt))
    r = u @ np.diag([1.0, 1.0, d if d != 0 else 1.0]) @ vt
    return Isometry3(r, mu_d - r @ mu_s)


def stereo_point_covariance(points, focal: float, baseline: float) -> np.ndarray:
    """Relative ``(N, 3, 3)`` covariances of stereo-triangulated points in their camera frame.

    One pixel of image noise (disparity noise ``sqrt(2)`` pixels) gives a
    lateral spread ``d / focal`` and a spread ``sqrt(2) d^2 / (focal baseline)``
    along the viewing ray at distance ``d``.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    d = np.maximum(np.linalg.norm(p, axis=1), 1e-9)
    u = p / d[:, None]
    lateral = (d / focal) ** 2
    along = 2.0 * (d * d / (focal * baseline)) ** 2
    return (lateral[:, None, None] * np.eye(3)
            + (along - lateral)[:, None, None] * np.einsum("ni,nj->nij", u, u))


def _refine_information_weighted(pi, pj, T: Isometry3, cov_i, cov_j, iterations: int = 10
                                 ) -> Isometry3:
    """Gauss-Newton on ``sum r^T (R C_i R^T + C_j)^-1 r`` with ``r = T p_i - p_j``."""
    eye = np.eye(3)
    for _ in range(iterations):
        q = T @ pi
        r = q - pj
        rot = T.rotation
        omega = np.linalg.inv(np.einsum("ab,nbc,dc->nad", rot, cov_i, rot) + cov_j)
        J = np.empty((len(pi), 3, 6))
        J[:, :, :3] = eye
        J[:, :, 3:] = -np.array([skew(x) for x in q])
        H = np.einsum("nai,nab,nbj->ij", J, omega, J)
        g = np.einsum("nai,nab,nb->i", J, omega, r)
        dx = np.linalg.solve(H, -g)
        T = Isometry3(so3_exp(dx[3:]), dx[:3]) @ T
        if np.linalg.norm(dx) < 1e-12:
            break
    return T.normalized()


def align_icp(points_i, points_j, inlier_threshold: float = 0.5, rounds: int = 20,
              covariances=None) -> tuple[Isometry3, np.ndarray, float]:
    """Rigid ``T_i2j`` with ``points_j ~= T_i2j @ points_i`` over known correspondences.

    Round 0 weights every pair equally. During the first half of the rounds
    pairs are reweighted by ``1 / (1 + (r / s)^2)`` with the scale ``s`` shrinking
    geometrically from the median residual to ``inlier_threshold``. The
    remaining rounds fit only the pairs whose residual is below
    ``inlier_threshold``.

    With ``covariances = (cov_i, cov_j)``, per-point ``(N, 3, 3)`` position
    covariances, the final inliers are refined by minimizing the
    covariance-weighted residual and then re-classified once. Returns the
    transform, the inlier mask and the mean squared inlier residual.
    """
    pi = np.asarray(points_i, dtype=float).reshape(-1, 3)
    pj = np.asarray(points_j, dtype=float).reshape(-1, 3)
    if len(pi) != len(pj):
        raise ValueError("correspondence arrays differ in length")
    if len(pi) < 3:
        raise AlignmentDegenerate(f"alignment degenerate: {len(pi)} correspondences")
    soft_rounds = rounds // 2
    w = np.ones(len(pi))
    scale = None
    T = Isometry3.identity()
    inliers = np.ones(len(pi), bool)
    for k in range(rounds):
        T = _weighted_rigid_fit(pi, pj, w)
        r = np.linalg.norm(T @ pi - pj, axis=1)
        inliers = r < inlier_threshold
        if k + 1 < soft_rounds:
            if scale is None:
                scale = max(float(np.median(r)), inlier_threshold)
                decay = (inlier_threshold / scale) ** (1.0 / max(soft_rounds - 2, 1))
            else:
                scale = max(scale * decay, inlier_threshold)
            w = 1.0 / (1.0 + (r / scale) ** 2)
            continue
        if inliers.sum() < 3:
            raise AlignmentDegenerate(f"alignment degenerate: {int(inliers.sum())} inliers")
        w = inliers.astype(float)
    if covariances is not None:
        cov_i, cov_j = (np.asarray(c, dtype=float).reshape(-1, 3, 3) for c in covariances)
        if len(cov_i) != len(pi) or len(cov_j) != len(pi):
            raise ValueError("one covariance per correspondence is required")
        T = _refine_information_weighted(pi[inliers], pj[inliers], T, cov_i[inliers],
                                         cov_j[inliers])
        inliers = np.linalg.norm(T @ pi - pj, axis=1) < inlier_threshold
        if inliers.sum() < 3:
            raise AlignmentDegenerate(f"alignment degenerate: {int(inliers.sum())} inliers")
    r2 = np.sum((T @ pi - pj) ** 2, axis=1)
    return T, inliers, float(r2[inliers].mean())


def validate_closure(map_i: int, map_j: int, alignment, min_inliers: int = 25,
                     max_mean_error: float = 0.25) -> Optional[ClosureConstraint]:
    T, inliers, mean_error = alignment
    count = int(np.count_nonzero(inliers))
    if count < min_inliers or mean_error > max_mean_error:
        return None
    return ClosureConstraint(map_i, map_j, T, count, mean_error)


def closure_for_candidate(world: WorldMap, current: LocalMap, candidate: ClosureCandidate,
                          cfg: RelocalizerConfig = RelocalizerConfig()) -> Optional[ClosureConstraint]:
    """Align the candidate's landmarks to the current map's and validate the result."""
    past = world.map_by_id(candidate.map_id)
    if len(candidate.correspondences) < 3:
        return None
    q_ids, m_ids = zip(*candidate.correspondences)
    p_i = current.T_w2c @ np.array([world.landmarks[i].p_w for i in q_ids])
    p_j = past.T_w2c @ np.array([world.landmarks[j].p_w for j in m_ids])
    rig = current.frames[-1].rig
    covariances = (stereo_point_covariance(p_i, rig.cam_L.fx, rig.baseline),
                   stereo_point_covariance(p_j, rig.cam_L.fx, rig.baseline))
    try:
        alignment = align_icp(p_i, p_j, cfg.icp_inlier_threshold, cfg.icp_rounds, covariances)
    except AlignmentDegenerate:
        return None
    return validate_closure(current.id, past.id, alignment, cfg.closure_min_inliers,
                            cfg.closure_max_mean_error)


def relocalize(world: WorldMap, current: LocalMap, tree: HBSTTree,
               cfg: RelocalizerConfig = RelocalizerConfig()) -> list[ClosureConstraint]:
    """Validated closures between ``current`` and earlier maps (the tree is not modified)."""
    out = []
    for candidate in find_closure_candidates(world, current, tree, cfg):
        constraint = closure_for_candidate(world, current, candidate, cfg)
        if constraint is not None:
            out.append(constraint)
    return out
