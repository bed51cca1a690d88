import numpy as np
import pytest

from stereoslam.geometry import Isometry3, se3_exp
from stereoslam.mapper import maybe_create_local_map
from stereoslam.model import Frame, Framepoint, KeypointWD, WorldMap
from stereoslam.posegraph import (ODOMETRY_INFORMATION, PoseGraph, UnconstrainedNodes,
                                  add_closure_edge, broadcast_poses, optimize_graph,
                                  relaxed_information)
from stereoslam.relocalizer import ClosureConstraint

from conftest import random_pose


def consistent_graph(poses, extra_edges=()):
    g = PoseGraph()
    for k, p in enumerate(poses):
        g.add_node(k, p)
    pairs = [(k, k + 1) for k in range(len(poses) - 1)] + list(extra_edges)
    for i, j in pairs:
        g.add_edge(i, j, poses[i].inverse() @ poses[j], ODOMETRY_INFORMATION)
    return g


def square():
    return [se3_exp([x, 0.0, z, 0.0, yaw, 0.0]) for x, z, yaw in
            ((0, 0, 0), (10, 0, np.pi / 2), (10, 10, np.pi), (0, 10, -np.pi / 2))]


def test_consistent_chain_has_zero_residuals():
    g = consistent_graph(square())
    for edge in g.edges.values():
        assert np.allclose(g.edge_error(edge), 0.0, atol=1e-12)


def test_consistent_chain_is_a_fixed_point():
    poses = square()
    g = consistent_graph(poses, [(3, 0)])
    optimize_graph(g)
    for k, p in enumerate(poses):
        assert np.allclose(g.nodes[k].pose.matrix(), p.matrix(), atol=1e-10)


def test_square_loop_recovers_corrupted_node():
    poses = square()
    g = consistent_graph(poses, [(3, 0)])
    g.nodes[2].pose = se3_exp([0.5, -0.3, 0.4, 0.05, -0.1, 0.08]) @ poses[2]
    optimize_graph(g, iterations=50, tolerance=1e-12)
    for k, p in enumerate(poses):
        assert np.allclose(g.nodes[k].pose.matrix(), p.matrix(), atol=1e-6)
    assert g.chi2() < 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_random_perturbed_loops(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 9))
    poses = [Isometry3.identity()]
    for _ in range(n - 1):
        poses.append(poses[-1] @ random_pose(rng, t_scale=3.0, angle=0.6))
    g = consistent_graph(poses, [(n - 1, 0), (n - 1, 1)])
    for k in range(1, n):
        g.nodes[k].pose = random_pose(rng, t_scale=0.2, angle=0.05) @ poses[k]
    optimize_graph(g, iterations=100, tolerance=1e-12)
    for k, p in enumerate(poses):
        assert np.allclose(g.nodes[k].pose.matrix(), p.matrix(), atol=1e-6)
    assert g.chi2() < 1e-12


def test_fixed_node_never_moves():
    poses = square()
    g = consistent_graph(poses, [(3, 0)])
    g.edges[(3, 0)].measurement = se3_exp([1, 0, 0, 0, 0.1, 0]) @ g.edges[(3, 0)].measurement
    before = g.nodes[0].pose.matrix().copy()
    optimize_graph(g)
    assert np.array_equal(g.nodes[0].pose.matrix(), before)
    assert g.nodes[0].fixed and sum(n.fixed for n in g.nodes.values()) == 1


def test_residuals_invariant_under_global_transform():
    rng = np.random.default_rng(7)
    g = consistent_graph(square(), [(3, 0)])
    for k in (1, 3):
        g.nodes[k].pose = random_pose(rng, 0.3, 0.1) @ g.nodes[k].pose
    before = {key: g.edge_error(e) for key, e in g.edges.items()}
    G = random_pose(rng, 5.0, 2.0)
    for node in g.nodes.values():
        node.pose = G @ node.pose
    for key, e in g.edges.items():
        assert np.allclose(g.edge_error(e), before[key], atol=1e-9)


def test_disconnected_graph_reports_nodes():
    g = PoseGraph()
    for k in range(4):
        g.add_node(k, Isometry3.identity())
    g.add_edge(0, 1, Isometry3.identity(), ODOMETRY_INFORMATION)
    g.add_edge(2, 3, Isometry3.identity(), ODOMETRY_INFORMATION)
    with pytest.raises(UnconstrainedNodes) as info:
        optimize_graph(g)
    assert info.value.ids == [2, 3]


def test_duplicate_edge_replaced():
    g = consistent_graph(square())
    new = Isometry3.from_translation([1, 2, 3])
    g.add_edge(0, 1, new, ODOMETRY_INFORMATION)
    assert len(g.edges) == 3 and g.edges[(0, 1)].measurement is new


def test_information_checks():
    relaxed = relaxed_information()
    assert np.allclose(np.diag(relaxed), [1, 1, 1, 1000, 1000, 1000])
    assert np.all(np.linalg.eigvalsh(relaxed) >= 0)
    g = consistent_graph(square())
    with pytest.raises(ValueError):
        g.add_edge(0, 1, Isometry3.identity(), np.triu(np.ones((6, 6))))


def test_closure_edge_uses_relaxed_translation():
    g = consistent_graph(square())
    c = ClosureConstraint(3, 0, Isometry3.identity(), 50, 0.01)
    edge = add_closure_edge(g, c)
    assert (edge.from_id, edge.to_id, edge.kind) == (0, 3, "closure")
    assert np.allclose(edge.information, relaxed_information())


def test_dump_format():
    g = consistent_graph(square()[:2])
    lines = g.dumps().splitlines()
    assert lines[0].split()[:2] == ["NODE", "0"] and len(lines[0].split()) == 9
    assert lines[-1].split()[:3] == ["EDGE", "0", "1"] and len(lines[-1].split()) == 3 + 7 + 21


def _world_with_maps(rig, count=2):
    world = WorldMap()
    for m in range(count):
        pending = []
        for k in range(7):
            z = 7 * m + k
            frame = Frame(z, rig, se3_exp([0.0, 0.0, float(z), 0.0, 0.02 * z, 0.0]))
            kl, kr = KeypointWD(200, 650.0, 0.0, 1), KeypointWD(200, 630.0, 0.0, 1)
            p = np.array([1.0, 0.5, 12.0])
            frame.points.append(Framepoint(kl, kr, p, frame.T_c2w @ p))
            pending.append(frame)
        lmap = maybe_create_local_map(world, pending)
        lm = world.new_landmark(lmap.frames[-1].points[0].p_w, lmap.frames[-1].points[0])
        lm.omega = np.diag([4.0, 5.0, 6.0])
        lm.nu = lm.omega @ lm.p_w
        lm.local_map_id = lmap.id
        lmap.landmarks.append(lm)
    return world


def test_broadcast_identity_leaves_world_untouched(rig):
    world = _world_with_maps(rig)
    snapshot = [f.T_c2w.matrix().copy() for m in world.maps for f in m.frames]
    lms = [lm.p_w.copy() for lm in world.landmarks.values()]
    assert broadcast_poses(world) == 0
    assert all(np.array_equal(a, f.T_c2w.matrix())
               for a, f in zip(snapshot, [f for m in world.maps for f in m.frames]))
    assert all(np.array_equal(a, lm.p_w) for a, lm in zip(lms, world.landmarks.values()))


def test_broadcast_translation(rig):
    world = _world_with_maps(rig)
    lmap = world.maps[1]
    frames_before = [f.T_c2w.translation.copy() for f in lmap.frames]
    points_before = [fp.p_w.copy() for f in lmap.frames for fp in f.points]
    lm = lmap.landmarks[0]
    lm_before = lm.p_w.copy()
    shift = Isometry3.from_translation([1.0, 0.0, 0.0])
    world.graph.nodes[1].pose = shift @ lmap.T_c2w
    assert broadcast_poses(world) == 1
    for f, t in zip(lmap.frames, frames_before):
        assert np.allclose(f.T_c2w.translation, t + [1, 0, 0], atol=1e-12)
    for fp, p in zip((fp for f in lmap.frames for fp in f.points), points_before):
        assert np.allclose(fp.p_w, p + [1, 0, 0], atol=1e-12)
    assert np.allclose(lm.p_w, lm_before + [1, 0, 0], atol=1e-12)
    assert np.allclose(np.linalg.solve(lm.omega, lm.nu), lm.p_w, atol=1e-12)
    assert np.allclose(world.maps[0].landmarks[0].p_w, world.maps[0].frames[-1].points[0].p_w)


def test_broadcast_keeps_relative_frame_poses(rig):
    world = _world_with_maps(rig)
    rng = np.random.default_rng(8)
    for k in (0, 1):
        world.graph.nodes[k].pose = random_pose(rng, 2.0, 0.3) @ world.maps[k].T_c2w
    broadcast_poses(world)
    for lmap in world.maps:
        assert np.allclose(lmap.T_c2w.matrix(), world.graph.nodes[lmap.id].pose.matrix())
        for f, rel in zip(lmap.frames, lmap.relative_frame_poses):
            assert np.allclose((lmap.T_c2w.inverse() @ f.T_c2w).matrix(), rel.matrix(), atol=1e-9)
