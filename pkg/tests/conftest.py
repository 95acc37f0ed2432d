import numpy as np
import pytest

from quadgait.expert import ExpertGains
from quadgait.robot import RobotModel
from quadgait.simulation import ContactParams


@pytest.fixture(scope="session")
def model():
    return RobotModel()


@pytest.fixture(scope="session")
def contact():
    return ContactParams()


@pytest.fixture(scope="session")
def gains():
    return ExpertGains()


def sample_branch_configs(model, rng, n):
    """Random per-leg joint triples inside limits and on the IK branch
    (foot below the abduction axis with a small margin)."""
    lo = model.joint_limits[:3, 0]
    hi = model.joint_limits[:3, 1]
    out = []
    while len(out) < n:
        q = lo + (hi - lo) * rng.random(3)
        w = model.l_thigh * np.cos(q[1]) + model.l_calf * np.cos(q[1] + q[2])
        if w > 0.02:
            out.append(q)
    return np.asarray(out)
