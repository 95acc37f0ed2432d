"""Deterministic fixed-step quadruped simulator.

The base is a floating rigid body driven by gravity and foot contact
forces.  The 12 joints are servo chains with a fixed apparent rotor
inertia, driven by PD torques plus the virtual-work reaction of the
foot contact force (J^T f).  Feet are points; the ground is the plane
z = 0 with a spring-damper normal law and a viscous-saturated Coulomb
tangential law.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import Diverged
from .robot import RobotModel, leg_forward_kinematics, leg_jacobian, _rot_x

GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass
class ContactParams:
    k_n: float = 3.0e4
    c_n: float = 300.0
    mu: float = 0.7
    v_slip: float = 0.02
    contact_force_threshold: float = 1.0
    # numerical guard: tangential force never exceeds the impulse that
    # would stop this effective mass within one step (prevents chatter
    # of the stiff viscous friction slope at slow creep)
    stop_mass: float = 0.6

    def __post_init__(self):
        if self.k_n <= 0 or self.c_n < 0 or self.mu < 0 or self.contact_force_threshold <= 0:
            raise ValueError("invalid contact parameters")
        if self.v_slip <= 0 or self.stop_mass <= 0:
            raise ValueError("v_slip and stop_mass must be positive")


@dataclass
class SimState:
    """Full simulator state. base_quat is (w, x, y, z), world <- body;
    base_lin_vel is world frame, base_ang_vel is body frame."""

    base_pos: np.ndarray
    base_quat: np.ndarray
    base_lin_vel: np.ndarray
    base_ang_vel: np.ndarray
    q: np.ndarray
    v: np.ndarray
    foot_force: np.ndarray
    time: float = 0.0

    def copy(self) -> "SimState":
        return SimState(
            self.base_pos.copy(),
            self.base_quat.copy(),
            self.base_lin_vel.copy(),
            self.base_ang_vel.copy(),
            self.q.copy(),
            self.v.copy(),
            self.foot_force.copy(),
            self.time,
        )


@dataclass
class ImuSample:
    ang_vel: np.ndarray
    lin_acc: np.ndarray


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_from_rotvec(phi: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(phi))
    if angle < 1e-12:
        return np.array([1.0, 0.5 * phi[0], 0.5 * phi[1], 0.5 * phi[2]])
    axis = phi / angle
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis))


def rpy_from_matrix(R: np.ndarray) -> tuple[float, float, float]:
    """Roll, pitch, yaw (ZYX convention) of a body->world rotation."""
    roll = float(np.arctan2(R[2, 1], R[2, 2]))
    pitch = float(np.arctan2(-R[2, 0], np.hypot(R[2, 1], R[2, 2])))
    yaw = float(np.arctan2(R[1, 0], R[0, 0]))
    return roll, pitch, yaw


def nominal_stance_state(
    model: RobotModel, yaw: float = 0.0, contact: ContactParams | None = None
) -> SimState:
    """Robot standing at the nominal pose, statically settled: the base
    sits one static deflection into the ground springs and the feet carry
    their quarter share of the weight, so the first observation already
    reads standing contact."""
    contact = contact or ContactParams()
    quat = np.array([np.cos(0.5 * yaw), 0.0, 0.0, np.sin(0.5 * yaw)])
    sag = model.mass * 9.81 / (4.0 * contact.k_n)
    force = np.zeros((4, 3))
    force[:, 2] = model.mass * 9.81 / 4.0
    return SimState(
        base_pos=np.array([0.0, 0.0, model.nominal_base_height - sag]),
        base_quat=quat,
        base_lin_vel=np.zeros(3),
        base_ang_vel=np.zeros(3),
        q=model.nominal_joint_pos.copy(),
        v=np.zeros(12),
        foot_force=force,
        time=0.0,
    )


def pd_torque(model: RobotModel, target: np.ndarray, q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """tau = kp (target - q) - kd v, clamped to +-tau_max per joint."""
    tau = model.kp * (np.asarray(target) - q) - model.kd * v
    return np.clip(tau, -model.tau_max, model.tau_max)


def _foot_contact_force(
    contact: ContactParams, p_world: np.ndarray, v_world: np.ndarray, dt: float
) -> np.ndarray:
    pen = -p_world[2]
    if pen <= 0.0:
        return np.zeros(3)
    fn = contact.k_n * pen + contact.c_n * max(0.0, -v_world[2])
    fn = max(fn, 0.0)
    force = np.array([0.0, 0.0, fn])
    vt = v_world[:2]
    speed = float(np.hypot(vt[0], vt[1]))
    if speed > 1e-12 and fn > 0.0:
        mag = contact.mu * fn * min(1.0, speed / contact.v_slip)
        mag = min(mag, contact.stop_mass * speed / dt)
        force[:2] = -mag * vt / speed
    return force


def step(
    state: SimState,
    model: RobotModel,
    contact: ContactParams,
    joint_target: np.ndarray,
    dt: float,
) -> SimState:
    """Advance one semi-implicit Euler step of length dt.

    Forces are evaluated once at the incoming configuration: servo PD
    torques, per-foot contact forces, and the virtual-work coupling
    J^T f into the joint dynamics.  The base additionally receives the
    rotor angular-momentum reaction of the accelerating joints, which
    vanishes in equilibrium and equals minus the servo torque for an
    unloaded swing leg.
    """
    if not 0.0 < dt <= 0.005:
        raise ValueError("dt must be in (0, 0.005]")
    _check_valid(state)

    R = quat_to_matrix(state.base_quat)
    tau = pd_torque(model, joint_target, state.q, state.v)

    foot_force = np.zeros((4, 3))
    tau_ext = np.zeros(12)
    torque_world = np.zeros(3)
    for leg in range(4):
        sl = model.leg_slice(leg)
        q_leg = state.q[sl]
        p_body = leg_forward_kinematics(model, leg, q_leg)
        J = leg_jacobian(model, leg, q_leg)
        p_world = state.base_pos + R @ p_body
        v_world = state.base_lin_vel + R @ (
            np.cross(state.base_ang_vel, p_body) + J @ state.v[sl]
        )
        force = _foot_contact_force(contact, p_world, v_world, dt)
        if force[2] > 0.0:
            foot_force[leg] = force
            tau_ext[sl] = J.T @ (R.T @ force)
            torque_world += np.cross(p_world - state.base_pos, force)

    # joint servo chains, fixed apparent rotor inertia
    alpha = (tau + tau_ext) / model.rotor_inertia
    v_new = state.v + alpha * dt
    q_new = state.q + v_new * dt
    lo, hi = model.joint_limits[:, 0], model.joint_limits[:, 1]
    below, above = q_new < lo, q_new > hi
    q_new = np.clip(q_new, lo, hi)
    v_new[below | above] = 0.0

    # rotor momentum reaction on the base (world frame)
    for leg in range(4):
        sl = model.leg_slice(leg)
        a = alpha[sl] * model.rotor_inertia
        pitch_axis = _rot_x(state.q[sl][0]) @ np.array([0.0, 1.0, 0.0])
        reaction_body = a[0] * np.array([1.0, 0.0, 0.0]) + (a[1] + a[2]) * pitch_axis
        torque_world -= R @ reaction_body

    force_world = foot_force.sum(axis=0) + model.mass * GRAVITY

    lin_vel = state.base_lin_vel + (force_world / model.mass) * dt
    base_pos = state.base_pos + lin_vel * dt

    torque_body = R.T @ torque_world
    I = model.base_inertia
    omega = state.base_ang_vel
    omega_dot = np.linalg.solve(I, torque_body - np.cross(omega, I @ omega))
    omega_new = omega + omega_dot * dt
    quat = quat_multiply(state.base_quat, quat_from_rotvec(omega_new * dt))
    quat /= np.linalg.norm(quat)

    new_state = SimState(
        base_pos=base_pos,
        base_quat=quat,
        base_lin_vel=lin_vel,
        base_ang_vel=omega_new,
        q=q_new,
        v=v_new,
        foot_force=foot_force,
        time=state.time + dt,
    )
    _check_valid(new_state)
    return new_state


def _check_valid(state: SimState):
    for arr in (
        state.base_pos,
        state.base_quat,
        state.base_lin_vel,
        state.base_ang_vel,
        state.q,
        state.v,
        state.foot_force,
    ):
        if not np.all(np.isfinite(arr)):
            raise Diverged(state.time)
    if np.linalg.norm(state.base_pos) > 100.0:
        raise Diverged(state.time)


def read_imu(prev: SimState, curr: SimState, dt: float) -> ImuSample:
    """Body-frame IMU synthesized from two consecutive states.

    The accelerometer reads specific force, so it reports +9.81 on z at
    rest and zero in free fall.
    """
    R = quat_to_matrix(curr.base_quat)
    lin_acc = R.T @ ((curr.base_lin_vel - prev.base_lin_vel) / dt - GRAVITY)
    return ImuSample(ang_vel=curr.base_ang_vel.copy(), lin_acc=lin_acc)


def contact_flags(state: SimState, contact: ContactParams) -> np.ndarray:
    """Boolean per-foot contact from the normal force component."""
    return state.foot_force[:, 2] > contact.contact_force_threshold


ROLLOUT_CSV_COLUMNS = (
    ["t", "px", "py", "pz", "qw", "qx", "qy", "qz"]
    + ["vx", "vy", "vz", "wx", "wy", "wz"]
    + [f"q_{i}" for i in range(12)]
    + [f"dq_{i}" for i in range(12)]
    + [f"target_{i}" for i in range(12)]
    + ["c_fl", "c_fr", "c_rl", "c_rr"]
)


@dataclass
class RolloutLog:
    """Per-step rows of a rollout: state, PD target and contact flags."""

    rows: list = field(default_factory=list)

    def append(self, state: SimState, target: np.ndarray, flags: np.ndarray):
        self.rows.append(
            np.concatenate(
                (
                    [state.time],
                    state.base_pos,
                    state.base_quat,
                    state.base_lin_vel,
                    state.base_ang_vel,
                    state.q,
                    state.v,
                    np.asarray(target, dtype=float),
                    flags.astype(float),
                )
            )
        )

    def as_array(self) -> np.ndarray:
        if not self.rows:
            return np.empty((0, len(ROLLOUT_CSV_COLUMNS)))
        return np.asarray(self.rows)

    def write_csv(self, path):
        data = self.as_array()
        buf = io.StringIO()
        buf.write(",".join(ROLLOUT_CSV_COLUMNS) + "\n")
        for row in data:
            buf.write(",".join(format(x, ".9g") for x in row) + "\n")
        with open(path, "w") as fh:
            fh.write(buf.getvalue())
