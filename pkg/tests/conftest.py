import numpy as np
import pytest

from rpf import geom
from rpf.scene import Pose


def rot(axis, angle_deg):
    return geom.quat_from_axis_angle(axis, angle_deg)


def rotx(angle_deg):
    return rot([1.0, 0.0, 0.0], angle_deg)


def rotz(angle_deg):
    return rot([0.0, 0.0, 1.0], angle_deg)


def random_pose(rng, box_m=4.0):
    return Pose(geom.random_quat(rng), rng.uniform(0.0, box_m, size=3))


def assert_unit_canonical(q, tol=1e-9):
    assert abs(np.linalg.norm(q) - 1.0) <= tol
    nonzero = [c for c in q if c != 0.0]
    assert nonzero and nonzero[0] > 0.0


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
