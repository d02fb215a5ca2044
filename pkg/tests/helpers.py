from pathlib import Path


from posecal.geometry import random_rotation
from posecal.skeleton import H36M17, Pose3D, Skeleton

FIXTURES = Path(__file__).parent / "fixtures"


def random_pose(rng, skeleton: Skeleton = H36M17, spread: float = 1.0) -> Pose3D:
    return Pose3D(skeleton, rng.normal(scale=spread, size=(skeleton.num_joints, 3)))


def rigid_motion(rng):
    return random_rotation(rng), rng.normal(scale=3.0, size=3)


def move(pose: Pose3D, R, t) -> Pose3D:
    return pose.with_joints(pose.joints @ R.T + t)


ACCEPTANCE_LINES: dict[int, str] = {}
