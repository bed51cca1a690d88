import numpy as np
import pytest

from stereoslam.dataset import (DatasetError, decode_pgm, format_calibration, load_image,
                                load_kitti_sequence, parse_calibration, read_trajectory,
                                write_pgm, write_trajectory)
from stereoslam.geometry import Isometry3, StereoRig, se3_exp

CALIB = ("P0: 700 0 600 0 0 700 180 0 0 0 1 0\n"
         "P1: 700 0 600 -378 0 700 180 0 0 0 1 0\n")


def make_sequence(root, frames=5, times=None, calib=CALIB, skip_right=None):
    for d in ("image_0", "image_1"):
        (root / d).mkdir(parents=True)
    rng = np.random.default_rng(0)
    for i in range(frames):
        img = rng.integers(0, 256, size=(376, 1241)).astype(np.uint8)
        write_pgm(root / "image_0" / f"{i:06d}.pgm", img)
        if i != skip_right:
            write_pgm(root / "image_1" / f"{i:06d}.pgm", img)
    times = [0.1 * i for i in range(frames)] if times is None else times
    (root / "times.txt").write_text("".join(f"{t}\n" for t in times))
    (root / "calib.txt").write_text(calib)
    return root


def test_fixture_sequence(tmp_path):
    seq = make_sequence(tmp_path / "sequences" / "07")
    m = load_kitti_sequence(tmp_path, "07")
    assert len(m) == 5 and m.name == "07"
    assert m.rig.B == pytest.approx(378.0) and m.rig.baseline == pytest.approx(0.54)
    assert (m.rig.cam_L.width, m.rig.cam_L.height) == (1241, 376)
    assert m.rig.cam_L.fx == 700 and m.rig.cam_L.cx == 600 and m.rig.cam_L.cy == 180
    left, right = m.load_pair(2)
    assert left.shape == (376, 1241) and np.array_equal(left, right)
    assert m.ground_truth is None
    write_trajectory([Isometry3.identity()] * 5, seq / "poses.txt")
    assert len(load_kitti_sequence(seq).ground_truth) == 5


def test_ground_truth_from_poses_directory(tmp_path):
    make_sequence(tmp_path / "sequences" / "03", frames=3)
    (tmp_path / "poses").mkdir()
    write_trajectory([Isometry3.identity()] * 3, tmp_path / "poses" / "03.txt")
    assert len(load_kitti_sequence(tmp_path, "03").ground_truth) == 3


def test_missing_right_image_names_index(tmp_path):
    make_sequence(tmp_path, skip_right=3)
    with pytest.raises(DatasetError, match="frame 3"):
        load_kitti_sequence(tmp_path)


def test_short_times_file(tmp_path):
    make_sequence(tmp_path, times=[0.0, 0.1, 0.2])
    with pytest.raises(DatasetError, match="times"):
        load_kitti_sequence(tmp_path)


def test_non_increasing_times(tmp_path):
    make_sequence(tmp_path, times=[0.0, 0.1, 0.1, 0.2, 0.3])
    with pytest.raises(DatasetError):
        load_kitti_sequence(tmp_path)


def test_unrectified_calibration(tmp_path):
    make_sequence(tmp_path, calib=CALIB.replace("P1: 700", "P1: 710"))
    with pytest.raises(DatasetError, match="rectified"):
        load_kitti_sequence(tmp_path)


def test_missing_sequence(tmp_path):
    with pytest.raises(DatasetError):
        load_kitti_sequence(tmp_path, "42")


def test_pgm_round_trip_and_plain_format(tmp_path):
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    write_pgm(tmp_path / "a.pgm", img)
    assert np.array_equal(load_image(tmp_path / "a.pgm"), img)
    plain = b"P2\n# comment\n4 3\n255\n" + " ".join(map(str, range(12))).encode()
    assert np.array_equal(decode_pgm(plain), img)
    with pytest.raises(DatasetError):
        decode_pgm(b"P6\n1 1\n255\n\x00\x00\x00")
    with pytest.raises(DatasetError):
        decode_pgm(b"P5\n4 3\n255\n\x00")


def test_calibration_round_trip():
    rig = StereoRig.from_intrinsics(718.856, 718.856, 607.1928, 185.2157, 0.54, 1241, 376)
    p0, p1 = parse_calibration(format_calibration(rig))
    assert np.array_equal(p0, rig.cam_L.P) and np.array_equal(p1, rig.cam_R.P)


def test_identity_pose_line(tmp_path):
    write_trajectory([Isometry3.identity()], tmp_path / "t.txt")
    assert (tmp_path / "t.txt").read_text() == "1 0 0 0 0 1 0 0 0 0 1 0\n"


def test_trajectory_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    poses = [se3_exp(rng.normal(size=6)) for _ in range(7)]
    write_trajectory(poses, tmp_path / "t.txt")
    assert len((tmp_path / "t.txt").read_text().splitlines()) == 7
    back = read_trajectory(tmp_path / "t.txt")
    for a, b in zip(poses, back):
        assert np.array_equal(a.matrix(), b.matrix())


def test_malformed_trajectory(tmp_path):
    (tmp_path / "t.txt").write_text("1 0 0\n")
    with pytest.raises(DatasetError):
        read_trajectory(tmp_path / "t.txt")
