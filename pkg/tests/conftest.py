import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from sgvad.distances import NormalizationConstants
from sgvad.scenegraph import Node

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

T = 30


def make_node(size=(10.0, 20.0), class_id=0, location=(5.0, 10.0), trajectory=None,
              pose=None, track_id=None, T=T):
    if trajectory is None:
        trajectory = np.tile(np.asarray(location, dtype=float), (T, 1))
    return Node(size=size, class_id=class_id, location=location, trajectory=trajectory,
                pose=pose, track_id=track_id)


def linear_trajectory(start, step, T=T):
    return np.asarray(start, dtype=float) + np.arange(T)[:, None] * np.asarray(step, dtype=float)


UNIT = NormalizationConstants.identity()


@pytest.fixture
def unit_constants():
    return UNIT


# ------------------------------------------------------------------ strategies

coord = st.floats(0.0, 2000.0, allow_nan=False, allow_infinity=False)
dim = st.floats(1.0, 400.0, allow_nan=False, allow_infinity=False)


@st.composite
def nodes(draw, T=T, classes=(0, 1, 2, 3), with_pose=None):
    loc = (draw(coord), draw(coord))
    steps = draw(st.lists(st.tuples(st.integers(-12, 12), st.integers(-12, 12)),
                          min_size=T - 1, max_size=T - 1))
    traj = np.vstack([loc, np.asarray(loc) + np.cumsum(np.asarray(steps, dtype=float), axis=0)])
    cls = draw(st.sampled_from(classes))
    has_pose = draw(st.booleans()) if with_pose is None else with_pose
    pose = None
    if has_pose:
        pts = draw(st.lists(st.tuples(st.floats(-60, 60), st.floats(-60, 60)), min_size=17, max_size=17))
        pose = np.asarray(loc) + np.asarray(pts)
    return Node(size=(draw(dim), draw(dim)), class_id=cls, location=loc, trajectory=traj, pose=pose)


def random_nodes(rng, n, T=T, pose_rate=0.5, classes=4):
    """Random nodes for bulk checks where hypothesis would be too slow."""
    out = []
    for _ in range(n):
        loc = rng.uniform(0, 1920, 2)
        traj = loc + np.vstack([np.zeros(2), np.cumsum(rng.integers(-8, 9, (T - 1, 2)), axis=0)])
        pose = loc + rng.normal(0, 25, (17, 2)) if rng.random() < pose_rate else None
        out.append(Node(size=rng.uniform(2, 300, 2), class_id=int(rng.integers(classes)),
                        location=loc, trajectory=traj, pose=pose))
    return out


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
