import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stereoslam.geometry import StereoRig, se3_exp, triangulate
from stereoslam.model import Frame, Framepoint, link_track
from stereoslam.synthworld import render_frame

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rig():
    return StereoRig.from_intrinsics(718.856, 718.856, 607.1928, 185.2157, 0.54, 1241, 376)


@pytest.fixture
def small_rig():
    return StereoRig.from_intrinsics(700.0, 700.0, 600.0, 180.0, 386.0 / 700.0, 1241, 376)


def random_pose(rng, t_scale=1.0, angle=0.5):
    w = rng.normal(size=3)
    w *= rng.uniform(0, angle) / np.linalg.norm(w)
    return se3_exp(np.concatenate([rng.normal(scale=t_scale, size=3), w]))


def linked_frame_pair(scene, i, j):
    """Frames ``i`` and ``j`` of a synthetic scene with tracks linked by world-point identity.

    The previous frame carries its ground-truth pose, the current one is left at identity.
    """
    rig = scene.spec.rig()
    frames, labels = [], []
    for k in (i, j):
        rf = render_frame(scene, k)
        pose = scene.poses[k] if k == i else None
        frame = Frame(k, rig, pose)
        for kl, kr in zip(rf.keypoints_L, rf.keypoints_R):
            p_c = triangulate(kl, kr, rig)
            frame.points.append(Framepoint(kl, kr, p_c, frame.T_c2w @ p_c))
        frames.append(frame)
        labels.append(rf.labels.tolist())
    prev, curr = frames
    by_label = dict(zip(labels[0], prev.points))
    for fp, label in zip(curr.points, labels[1]):
        match = by_label.get(label)
        if match is not None:
            link_track(match, fp)
    return prev, curr


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion, then assert it."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
