"""Robot geometry and per-leg kinematics.

Joint order is leg-major: (FL, FR, RL, RR) x (abduction, thigh, knee),
so leg i owns q[3*i : 3*i+3].  Each leg is an abduction roll joint about
the body x axis at the hip root, a lateral offset of +-l_abd along y,
then a two-link thigh/calf chain pitching about the (rolled) y axis.
q = (0, 0, 0) places the foot straight below the abduction pivot at
depth l_thigh + l_calf.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Unreachable


class LegIndex:
    """Leg name constants; values index the 3-joint blocks."""

    FL = 0
    FR = 1
    RL = 2
    RR = 3

    NAMES = ("FL", "FR", "RL", "RR")


# +1 for left legs (abduction offset along +y), -1 for right legs.
SIDE_SIGN = np.array([1.0, -1.0, 1.0, -1.0])


@dataclass
class RobotModel:
    """Geometric, inertial and servo parameters of a Go1-like quadruped.

    None of these values come from the source robot's datasheet; they are
    plausible desk-scale defaults, all overridable through the config file.
    """

    mass: float = 12.0
    base_inertia: np.ndarray = field(
        default_factory=lambda: np.diag([0.10, 0.25, 0.30])
    )
    hip_offsets: np.ndarray = field(
        default_factory=lambda: np.array(
            [
                [0.1881, 0.04675, 0.0],
                [0.1881, -0.04675, 0.0],
                [-0.1881, 0.04675, 0.0],
                [-0.1881, -0.04675, 0.0],
            ]
        )
    )
    l_abd: float = 0.08
    l_thigh: float = 0.213
    l_calf: float = 0.213
    kp: float = 40.0
    kd: float = 0.5
    tau_max: float = 23.7
    rotor_inertia: float = 0.02
    joint_limits: np.ndarray = field(default_factory=lambda: _default_joint_limits())
    nominal_base_height: float = 0.30
    nominal_joint_pos: np.ndarray = field(default_factory=lambda: np.zeros(12))

    def __post_init__(self):
        self.base_inertia = np.asarray(self.base_inertia, dtype=float)
        self.hip_offsets = np.asarray(self.hip_offsets, dtype=float)
        self.joint_limits = np.asarray(self.joint_limits, dtype=float)
        self.nominal_joint_pos = np.asarray(self.nominal_joint_pos, dtype=float)
        if not np.any(self.nominal_joint_pos):
            self.nominal_joint_pos = nominal_pose_for_height(
                self.nominal_base_height, self.l_thigh, self.l_calf
            )
        self.validate()

    def validate(self):
        if self.mass <= 0 or self.l_thigh <= 0 or self.l_calf <= 0:
            raise ValueError("mass and link lengths must be positive")
        if self.kp <= 0 or self.kd < 0:
            raise ValueError("kp must be > 0 and kd >= 0")
        if self.tau_max <= 0 or self.rotor_inertia <= 0:
            raise ValueError("tau_max and rotor_inertia must be positive")
        signs = np.sign(self.hip_offsets[:, :2])
        expected = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
        if not np.array_equal(signs, expected):
            raise ValueError("hip_offsets must follow the FL,FR,RL,RR sign pattern")
        lo, hi = self.joint_limits[:, 0], self.joint_limits[:, 1]
        if not np.all(lo < hi):
            raise ValueError("each joint limit pair must satisfy lo < hi")
        if not (np.all(self.nominal_joint_pos > lo) and np.all(self.nominal_joint_pos < hi)):
            raise ValueError("nominal_joint_pos must lie strictly inside joint_limits")

    @property
    def max_leg_radius(self) -> float:
        return self.l_thigh + self.l_calf

    @property
    def min_leg_radius(self) -> float:
        return abs(self.l_thigh - self.l_calf)

    def leg_slice(self, leg: int) -> slice:
        return slice(3 * leg, 3 * leg + 3)


def _default_joint_limits() -> np.ndarray:
    # abduction, thigh, knee repeated per leg; knee range keeps the
    # knee-backward branch (knee < 0) and stays off the stretch singularity
    per_leg = np.array([[-0.86, 0.86], [-0.90, 2.40], [-2.70, -0.85]])
    return np.tile(per_leg, (4, 1))


def nominal_pose_for_height(height: float, l_thigh: float, l_calf: float) -> np.ndarray:
    """Joint vector putting every foot straight below its abduction pivot
    at the given depth (symmetric two-link stance, knee-backward)."""
    c = height / (l_thigh + l_calf)
    if not 0.0 < c < 1.0:
        raise ValueError(f"nominal height {height} not reachable by the leg chain")
    # equal link lengths assumed by this shortcut; exact for the default model
    q_thigh = float(np.arccos(c))
    pose = np.zeros(12)
    pose[1::3] = q_thigh
    pose[2::3] = -2.0 * q_thigh
    return pose


def _rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def leg_forward_kinematics(model: RobotModel, leg: int, q_leg: np.ndarray) -> np.ndarray:
    """Foot position in the body frame for one leg.

    Chain: hip root offset, roll by q0 about x, lateral +-l_abd along y,
    thigh pitch q1 and knee pitch q2 about the rolled y axis.
    """
    q0, q1, q2 = float(q_leg[0]), float(q_leg[1]), float(q_leg[2])
    lt, lc = model.l_thigh, model.l_calf
    # planar chain in the rolled x-z plane; q1 = 0 points straight down
    x = -lt * np.sin(q1) - lc * np.sin(q1 + q2)
    z = -lt * np.cos(q1) - lc * np.cos(q1 + q2)
    local = np.array([x, SIDE_SIGN[leg] * model.l_abd, z])
    return model.hip_offsets[leg] + _rot_x(q0) @ local


def leg_jacobian(model: RobotModel, leg: int, q_leg: np.ndarray) -> np.ndarray:
    """Analytic 3x3 Jacobian d(foot position)/d(q_leg), body frame."""
    q0, q1, q2 = float(q_leg[0]), float(q_leg[1]), float(q_leg[2])
    lt, lc = model.l_thigh, model.l_calf
    s1, c1 = np.sin(q1), np.cos(q1)
    s12, c12 = np.sin(q1 + q2), np.cos(q1 + q2)
    rx = _rot_x(q0)

    local = np.array([-lt * s1 - lc * s12, SIDE_SIGN[leg] * model.l_abd, -lt * c1 - lc * c12])
    p_rel = rx @ local  # foot relative to hip root

    J = np.empty((3, 3))
    J[:, 0] = np.cross([1.0, 0.0, 0.0], p_rel)
    J[:, 1] = rx @ np.array([-lt * c1 - lc * c12, 0.0, lt * s1 + lc * s12])
    J[:, 2] = rx @ np.array([-lc * c12, 0.0, lc * s12])
    return J


def leg_inverse_kinematics(
    model: RobotModel,
    leg: int,
    p_body: np.ndarray,
    eps: float = 1e-4,
    clamp: bool = False,
) -> np.ndarray:
    """Analytic 3-DoF IK on the knee-backward branch (knee angle <= 0).

    The branch also fixes the foot to the half-space below the abduction
    axis in the rolled leg plane, which is where stance and swing targets
    live.  With clamp=True an out-of-workspace target is projected to the
    nearest boundary instead of raising Unreachable.
    """
    p_rel = np.asarray(p_body, dtype=float) - model.hip_offsets[leg]
    x, y, z = p_rel
    lt, lc = model.l_thigh, model.l_calf
    d = SIDE_SIGN[leg] * model.l_abd

    planar_sq = y * y + z * z - model.l_abd**2
    if planar_sq < eps * eps:
        if not clamp:
            raise Unreachable(tuple(np.asarray(p_body, float)), model.max_leg_radius)
        planar_sq = eps * eps
    planar = np.sqrt(planar_sq)  # depth of the foot below the abduction axis

    q0 = np.arctan2(z, y) - np.arctan2(-planar, d)

    r_sq = x * x + planar_sq
    r = np.sqrt(r_sq)
    r_min, r_max = model.min_leg_radius, model.max_leg_radius
    if r < r_min - 1e-12 or r > r_max + 1e-12:
        if not clamp:
            raise Unreachable(tuple(np.asarray(p_body, float)), r_max)
        r_new = min(max(r, r_min + eps), r_max - eps)
        scale = r_new / max(r, 1e-12)
        x *= scale
        planar *= scale
        r_sq = r_new * r_new

    cos_knee = (r_sq - lt * lt - lc * lc) / (2.0 * lt * lc)
    q2 = -np.arccos(np.clip(cos_knee, -1.0, 1.0))
    q1 = np.arctan2(-x, planar) - np.arctan2(lc * np.sin(q2), lt + lc * np.cos(q2))

    # wrap q0 into (-pi, pi]
    q0 = (q0 + np.pi) % (2.0 * np.pi) - np.pi
    return np.array([q0, q1, q2])


def full_forward_kinematics(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Foot positions (4, 3) in the body frame for the stacked joint vector."""
    return np.stack(
        [leg_forward_kinematics(model, leg, q[3 * leg : 3 * leg + 3]) for leg in range(4)]
    )
