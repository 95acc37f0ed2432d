"""Evaluation: open-loop metrics, loss-curve export, trajectory export,
closed-loop rollouts and scripted gait switching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, build_observation, inverse_pd_target
from .errors import DegenerateTruth, Diverged, UnknownTask
from .expert import ExpertGains, expert_torques
from .gait import GaitSpec, VelocityCommand
from .network import MtlNetwork
from .robot import RobotModel
from .simulation import (
    ContactParams,
    RolloutLog,
    SimState,
    contact_flags,
    nominal_stance_state,
    quat_to_matrix,
    read_imu,
    rpy_from_matrix,
    step,
)


@dataclass
class TaskMetrics:
    task: str
    mse: float
    mae: float
    r2: float


def compute_metrics(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float, float]:
    """Pooled MSE, MAE and R^2 over all entries of the prediction matrix.

    R^2 uses the flattened truth mean for SS_tot; raises DegenerateTruth
    when the truth is (near) constant.
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth shapes differ")
    if pred.shape[0] < 2:
        raise ValueError("need at least 2 records")
    err = pred - truth
    mse = float(np.mean(err * err))
    mae = float(np.mean(np.abs(err)))
    ss_res = float(np.sum(err * err))
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot < 1e-12:
        raise DegenerateTruth("truth variance below 1e-12, R^2 undefined")
    return mse, mae, 1.0 - ss_res / ss_tot


def per_joint_r2(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-output-column R^2 (exported alongside the pooled statistic)."""
    out = np.empty(pred.shape[1])
    for j in range(pred.shape[1]):
        ss_res = np.sum((pred[:, j] - truth[:, j]) ** 2)
        ss_tot = np.sum((truth[:, j] - truth[:, j].mean()) ** 2)
        out[j] = np.nan if ss_tot < 1e-12 else 1.0 - ss_res / ss_tot
    return out


def evaluate_model(net: MtlNetwork, holdout: dict[int, Dataset], task_names: list[str]):
    """Teacher-forced predictions on held-out records.

    Returns (metrics per task, per-joint R^2 per task, front-left
    trajectory table), the latter holding (t, expert, predicted) for the
    FL hip/thigh/knee joints.
    """
    metrics: list[TaskMetrics] = []
    joint_r2: dict[str, np.ndarray] = {}
    traj_rows = []
    for task in sorted(holdout):
        if task >= len(task_names):
            raise UnknownTask(f"task id {task} has no name entry")
        ds = holdout[task]
        pred = net.forward(ds.obs.astype(float), task)
        truth = ds.act.astype(float)
        mse, mae, r2 = compute_metrics(pred, truth)
        metrics.append(TaskMetrics(task_names[task], mse, mae, r2))
        joint_r2[task_names[task]] = per_joint_r2(pred, truth)
        dt = 1.0 / ds.sample_rate_hz
        for j, joint in enumerate(("fl_hip", "fl_thigh", "fl_knee")):
            for i in range(len(ds)):
                traj_rows.append((task_names[task], i * dt, joint, truth[i, j], pred[i, j]))
    return metrics, joint_r2, traj_rows


def write_metrics_csv(path, rows: list[tuple[str, str, TaskMetrics]]):
    """rows: (task, split, metrics)."""
    with open(path, "w") as fh:
        fh.write("task,split,mse,mae,r2\n")
        for task, split, m in rows:
            fh.write(f"{task},{split},{m.mse:.9g},{m.mae:.9g},{m.r2:.9g}\n")


def write_curves_csv(path, history, task_names: list[str]):
    with open(path, "w") as fh:
        fh.write("epoch,task,train_loss,val_loss\n")
        for rec in history:
            for task in sorted(rec.train_loss):
                name = task_names[task] if task < len(task_names) else str(task)
                fh.write(f"{rec.epoch},{name},{rec.train_loss[task]:.9g},{rec.val_loss[task]:.9g}\n")


def write_traj_csv(path, traj_rows):
    with open(path, "w") as fh:
        fh.write("task,t,joint,expert,predicted\n")
        for task, t, joint, exp_val, pred_val in traj_rows:
            fh.write(f"{task},{t:.6g},{joint},{exp_val:.9g},{pred_val:.9g}\n")


# ---------------------------------------------------------------------------
# closed-loop rollouts

@dataclass
class RolloutSummary:
    survived: bool
    survival_time: float
    duration: float
    mean_vx_error: float
    mean_vy_error: float
    mean_height: float

    def ok(self) -> bool:
        return self.survived


def _survival_ok(state: SimState, model: RobotModel) -> bool:
    height = state.base_pos[2]
    if not 0.4 * model.nominal_base_height <= height <= 1.6 * model.nominal_base_height:
        return False
    roll, pitch, _ = rpy_from_matrix(quat_to_matrix(state.base_quat))
    return abs(roll) < 0.6 and abs(pitch) < 0.6


def closed_loop_rollout(
    model: RobotModel,
    contact: ContactParams,
    spec: GaitSpec,
    cmd: VelocityCommand,
    duration: float,
    net: MtlNetwork | None = None,
    task_id: int = 0,
    expert_gains: ExpertGains | None = None,
    dt: float = 1e-3,
    transient: float = 1.0,
    state: SimState | None = None,
    log_target: RolloutLog | None = None,
):
    """Run the policy (or, with net=None, the expert) in closed loop.

    Each step: synthesize the observation, query the policy for a joint
    target, apply it through the PD controller and integrate.  The
    summary reports survival (height inside [0.4, 1.6] x nominal, tilt
    below 0.6 rad) and mean velocity-tracking error after the transient.
    """
    if net is not None and not (net.arch.kind == "single_task" or task_id < net.arch.num_tasks):
        raise UnknownTask(f"task id {task_id} not trained (K={net.arch.num_tasks})")
    gains = expert_gains or ExpertGains()
    state = state.copy() if state is not None else nominal_stance_state(model, contact=contact)
    prev = state
    t_end = state.time + duration
    track_vx, track_vy, heights = [], [], []
    survived = True
    survival_time = duration
    start_time = state.time
    while state.time < t_end - 0.5 * dt:
        imu = read_imu(prev, state, dt)
        flags = contact_flags(state, contact)
        obs = build_observation(imu, state, flags)
        if net is None:
            action = expert_torques(state, model, spec, cmd, state.time, gains, contact.mu)
            target = inverse_pd_target(action.tau_raw, state.q, state.v, model.kp, model.kd)
        else:
            target = net.forward(obs, task_id)
        if log_target is not None:
            log_target.append(state, target, flags)
        prev = state
        try:
            state = step(state, model, contact, target, dt)
        except Diverged as exc:
            survived = False
            survival_time = exc.time - start_time
            break
        if not _survival_ok(state, model):
            survived = False
            survival_time = state.time - start_time
            break
        if state.time - start_time > transient:
            R = quat_to_matrix(state.base_quat)
            vel_body = R.T @ state.base_lin_vel
            track_vx.append(abs(vel_body[0] - cmd.vx))
            track_vy.append(abs(vel_body[1] - cmd.vy))
            heights.append(state.base_pos[2])
    summary = RolloutSummary(
        survived=survived,
        survival_time=survival_time,
        duration=duration,
        mean_vx_error=float(np.mean(track_vx)) if track_vx else np.nan,
        mean_vy_error=float(np.mean(track_vy)) if track_vy else np.nan,
        mean_height=float(np.mean(heights)) if heights else np.nan,
    )
    return state, summary


# ---------------------------------------------------------------------------
# gait switching

@dataclass
class SwitchScenario:
    """Time-sorted (t, gait name, command) events plus total duration."""

    events: list[tuple[float, str, VelocityCommand]]
    duration: float

    def __post_init__(self):
        if not self.events:
            raise ValueError("scenario needs at least one event")
        times = [e[0] for e in self.events]
        if times != sorted(times):
            raise ValueError("events must be time-sorted")
        if self.events[0][0] != 0.0:
            raise ValueError("first event must start at t=0")


def parse_scenario(text: str, duration: float | None = None) -> SwitchScenario:
    """Parse 't gait vx vy wz' lines; '#' starts a comment."""
    events = []
    end = 0.0
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"bad scenario line: {line!r}")
        t, gait = float(parts[0]), parts[1]
        cmd = VelocityCommand(float(parts[2]), float(parts[3]), float(parts[4]))
        events.append((t, gait, cmd))
        end = max(end, t)
    if duration is None:
        duration = end + 3.0
    return SwitchScenario(events=events, duration=duration)


def run_switch_scenario(
    net: MtlNetwork,
    model: RobotModel,
    contact: ContactParams,
    scenario: SwitchScenario,
    gait_specs: dict[str, GaitSpec],
    task_ids: dict[str, int],
    dt: float = 1e-3,
    transient: float = 1.0,
    log_target: RolloutLog | None = None,
):
    """Execute the scenario, switching the active head at each event.

    Unknown gait names raise UnknownTask before any simulation.  Returns
    per-segment (gait, command, RolloutSummary) tuples.
    """
    for _, gait, _cmd in scenario.events:
        if gait not in task_ids:
            raise UnknownTask(f"gait '{gait}' not in the trained task set")
        if not (net.arch.kind == "single_task" or task_ids[gait] < net.arch.num_tasks):
            raise UnknownTask(f"gait '{gait}' head index out of range")

    state = nominal_stance_state(model, contact=contact)
    segments = []
    bounds = [e[0] for e in scenario.events] + [scenario.duration]
    for i, (t0, gait, cmd) in enumerate(scenario.events):
        seg_duration = bounds[i + 1] - t0
        if seg_duration <= 0:
            continue
        state, summary = closed_loop_rollout(
            model,
            contact,
            gait_specs[gait],
            cmd,
            seg_duration,
            net=net,
            task_id=task_ids[gait],
            dt=dt,
            transient=min(transient, seg_duration * 0.5),
            state=state,
            log_target=log_target,
        )
        segments.append((gait, cmd, summary))
        if not summary.survived:
            break
    return segments
