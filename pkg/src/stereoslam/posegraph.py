"""SE(3) pose graph over local maps, its optimizer and the pose/landmark broadcast."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .geometry import Isometry3, rotation_to_quaternion, se3_exp, se3_log, skew

# translation block first, then rotation
ODOMETRY_INFORMATION = np.diag([100.0, 100.0, 100.0, 1000.0, 1000.0, 1000.0])
CLOSURE_TRANSLATION_SCALE = 0.01


class UnconstrainedNodes(ValueError):
    """Some nodes are not connected to the fixed node by any chain of edges."""

    def __init__(self, ids: Iterable[int]):
        self.ids = sorted(ids)
        super().__init__(f"unconstrained nodes: {self.ids}")


@dataclass(eq=False)
class GraphNode:
    id: int
    pose: Isometry3  # map-to-world
    fixed: bool = False


@dataclass(eq=False)
class GraphEdge:
    """Constraint ``measurement ~= T_from^-1 T_to``."""

    from_id: int
    to_id: int
    measurement: Isometry3
    information: np.ndarray
    kind: str = "odometry"

    def __post_init__(self):
        info = np.asarray(self.information, dtype=float)
        if info.shape != (6, 6) or not np.allclose(info, info.T, rtol=0.0, atol=1e-12):
            raise ValueError("edge information must be a symmetric 6x6 matrix")
        self.information = info


def relaxed_information(information: np.ndarray = ODOMETRY_INFORMATION,
                        scale: float = CLOSURE_TRANSLATION_SCALE) -> np.ndarray:
    """Copy of ``information`` with its translational block scaled by ``scale``."""
    out = np.array(information, dtype=float)
    out[:3, :3] *= scale
    return out


def adjoint(t: Isometry3) -> np.ndarray:
    r = t.rotation
    out = np.zeros((6, 6))
    out[:3, :3] = r
    out[:3, 3:] = skew(t.translation) @ r
    out[3:, 3:] = r
    return out


def _right_jacobian_inverse(e: np.ndarray) -> np.ndarray:
    """Second-order approximation ``I + ad(e)/2``."""
    ad = np.zeros((6, 6))
    ad[:3, :3] = skew(e[3:])
    ad[:3, 3:] = skew(e[:3])
    ad[3:, 3:] = skew(e[3:])
    return np.eye(6) + 0.5 * ad


class PoseGraph:
    def __init__(self):
        self.nodes: dict[int, GraphNode] = {}
        self.edges: dict[tuple[int, int], GraphEdge] = {}

    def add_node(self, node_id: int, pose: Isometry3) -> GraphNode:
        """Add a node; the first node added is the fixed gauge."""
        if node_id in self.nodes:
            raise ValueError(f"node {node_id} already exists")
        node = GraphNode(node_id, pose, fixed=not self.nodes)
        self.nodes[node_id] = node
        return node

    def add_edge(self, from_id: int, to_id: int, measurement: Isometry3,
                 information: np.ndarray, kind: str = "odometry") -> GraphEdge:
        """Add an edge; an existing edge on the same ordered pair is replaced."""
        for nid in (from_id, to_id):
            if nid not in self.nodes:
                raise KeyError(f"node {nid} does not exist")
        edge = GraphEdge(from_id, to_id, measurement, information, kind)
        self.edges[(from_id, to_id)] = edge
        return edge

    def edge_error(self, edge: GraphEdge) -> np.ndarray:
        ti = self.nodes[edge.from_id].pose
        tj = self.nodes[edge.to_id].pose
        return se3_log(edge.measurement.inverse() @ ti.inverse() @ tj)

    def chi2(self) -> float:
        total = 0.0
        for edge in self.edges.values():
            e = self.edge_error(edge)
            total += float(e @ edge.information @ e)
        return total

    def unconstrained(self) -> list[int]:
        """Ids of nodes not reachable from a fixed node."""
        adjacency: dict[int, list[int]] = {nid: [] for nid in self.nodes}
        for i, j in self.edges:
            adjacency[i].append(j)
            adjacency[j].append(i)
        seen = {nid for nid, n in self.nodes.items() if n.fixed}
        queue = deque(seen)
        while queue:
            for nxt in adjacency[queue.popleft()]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return sorted(set(self.nodes) - seen)

    def dumps(self) -> str:
        """Plain-text dump: ``NODE id tx ty tz qx qy qz qw`` and
        ``EDGE from to tx ty tz qx qy qz qw`` plus 21 upper-triangular information entries."""
        lines = []
        for nid in sorted(self.nodes):
            lines.append(f"NODE {nid} {_pose_text(self.nodes[nid].pose)}")
        iu = np.triu_indices(6)
        for (i, j), edge in sorted(self.edges.items()):
            info = " ".join(f"{v:.17g}" for v in edge.information[iu])
            lines.append(f"EDGE {i} {j} {_pose_text(edge.measurement)} {info}")
        return "\n".join(lines) + "\n"


def _pose_text(t: Isometry3) -> str:
    w, x, y, z = rotation_to_quaternion(t.rotation)
    return " ".join(f"{v:.17g}" for v in (*t.translation, x, y, z, w))


def add_odometry_edge(graph: PoseGraph, prev_map, curr_map,
                      information: np.ndarray = ODOMETRY_INFORMATION) -> GraphEdge:
    """Edge from ``prev_map`` to ``curr_map`` measuring their tracked relative pose."""
    measurement = prev_map.T_c2w.inverse() @ curr_map.T_c2w
    return graph.add_edge(prev_map.id, curr_map.id, measurement, information, "odometry")


def add_closure_edge(graph: PoseGraph, constraint,
                     information: np.ndarray = ODOMETRY_INFORMATION,
                     scale: float = CLOSURE_TRANSLATION_SCALE) -> GraphEdge:
    """Edge from ``map_j`` to ``map_i`` measuring ``T_i2j`` with relaxed translation."""
    return graph.add_edge(constraint.map_j, constraint.map_i, constraint.T_i2j,
                          relaxed_information(information, scale), "closure")


def optimize_graph(graph: PoseGraph, iterations: int = 20, tolerance: float = 1e-9) -> int:
    """Damped Gauss-Newton on the node poses with right-multiplicative updates.

    Each step solves ``(H + I) dx = -b`` over the free nodes. Stops early, without
    applying it, when the update norm drops below ``tolerance``. Returns the
    number of updates applied.
    """
    missing = graph.unconstrained()
    if missing:
        raise UnconstrainedNodes(missing)
    free = [nid for nid in sorted(graph.nodes) if not graph.nodes[nid].fixed]
    if not free or not graph.edges:
        return 0
    index = {nid: k for k, nid in enumerate(free)}
    n = 6 * len(free)
    applied = 0
    for _ in range(iterations):
        H = np.zeros((n, n))
        b = np.zeros(n)
        for edge in graph.edges.values():
            ti = graph.nodes[edge.from_id].pose
            tj = graph.nodes[edge.to_id].pose
            e = se3_log(edge.measurement.inverse() @ ti.inverse() @ tj)
            jr_inv = _right_jacobian_inverse(e)
            blocks = {}
            if edge.to_id in index:
                blocks[index[edge.to_id]] = jr_inv
            if edge.from_id in index:
                blocks[index[edge.from_id]] = -jr_inv @ adjoint(tj.inverse() @ ti)
            omega = edge.information
            for a, ja in blocks.items():
                sa = slice(6 * a, 6 * a + 6)
                b[sa] += ja.T @ omega @ e
                for c, jc in blocks.items():
                    H[sa, 6 * c:6 * c + 6] += ja.T @ omega @ jc
        dx = np.linalg.solve(H + np.eye(n), -b)
        if np.linalg.norm(dx) < tolerance:
            break
        for nid, k in index.items():
            node = graph.nodes[nid]
            node.pose = (node.pose @ se3_exp(dx[6 * k:6 * k + 6])).normalized()
        applied += 1
    return applied


def _same_pose(a: Isometry3, b: Isometry3) -> bool:
    return np.array_equal(a.rotation, b.rotation) and np.array_equal(a.translation, b.translation)


def broadcast_poses(world, graph: Optional[PoseGraph] = None) -> int:
    """Move local maps, their frames and landmarks to the optimized node poses.

    Landmarks follow the map that observed them last. Maps whose node pose is
    unchanged are left untouched. Returns the number of maps moved.
    """
    graph = graph if graph is not None else world.graph
    deltas: dict[int, Isometry3] = {}
    for lmap in world.maps:
        node = graph.nodes.get(lmap.id)
        if node is None or _same_pose(node.pose, lmap.T_c2w):
            continue
        deltas[lmap.id] = node.pose @ lmap.T_c2w.inverse()
        lmap.T_c2w = node.pose
        for frame, rel in zip(lmap.frames, lmap.relative_frame_poses):
            frame.T_c2w = (node.pose @ rel).normalized()
            frame.update_world_points()
    if not deltas:
        return 0
    for lm in world.landmarks.values():
        delta = deltas.get(lm.local_map_id)
        if delta is None:
            continue
        r = delta.rotation
        lm.p_w = delta @ lm.p_w
        lm.omega = r @ lm.omega @ r.T
        lm.nu = lm.omega @ lm.p_w
    return len(deltas)
