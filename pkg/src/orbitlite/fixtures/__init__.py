"""Canonical robot description fixtures shipped with the package."""

from __future__ import annotations

import functools
from importlib import resources

from ..description import RobotDescription, parse_robot_description

FIXTURES = ("pendulum", "planar2", "arm7", "arm6", "quadruped", "drawer")

# end-effector frames and nominal "ready" postures (hand pointing down over
# the front workspace, grasp point near (0.45, 0, 0.28))
ARM_EE_LINK = {"arm7": "hand", "arm6": "hand"}
ARM_HOME = {
    "arm7": [0.0, 0.4718, 0.0, 1.4931, 0.0, 1.1767, 0.0],
    "arm6": [0.0, 0.5310, 0.0, 1.4267, 1.1839, 0.0],
}
QUADRUPED_STAND_Q = {
    "base_z": 0.36,
    "lf_hip_fe": 0.4, "lf_knee": -0.8,
    "rf_hip_fe": 0.4, "rf_knee": -0.8,
    "lh_hip_fe": 0.4, "lh_knee": -0.8,
    "rh_hip_fe": 0.4, "rh_knee": -0.8,
}
FEET = ("lf_foot", "rf_foot", "lh_foot", "rh_foot")


def fixture_text(name: str) -> str:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; have {FIXTURES}")
    return resources.files(__package__).joinpath(f"{name}.yaml").read_text()


@functools.lru_cache(maxsize=None)
def load_fixture(name: str) -> RobotDescription:
    return parse_robot_description(fixture_text(name))
