"""Supervised pair construction, collection campaigns and dataset files.

The 34-entry observation vector is, in order: gyro (3), accelerometer
(3), joint positions (12), joint velocities (12), contact flags (4).
Targets are desired joint positions recovered from the expert's
pre-clamp torque by inverting the PD law, so replaying a target through
the PD controller reproduces the expert torque exactly (clamp included).
"""

from __future__ import annotations

import io
import logging
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    ChecksumMismatch,
    Diverged,
    EmptyDataset,
    TruncatedFile,
    VersionMismatch,
)
from .expert import ExpertGains, expert_torques
from .gait import GaitSpec, VelocityCommand
from .robot import RobotModel
from .simulation import ContactParams, SimState, contact_flags, nominal_stance_state, read_imu, step

log = logging.getLogger(__name__)

OBS_DIM = 34
ACT_DIM = 12

GYRO = slice(0, 3)
ACCEL = slice(3, 6)
JOINT_POS = slice(6, 18)
JOINT_VEL = slice(18, 30)
CONTACTS = slice(30, 34)


def build_observation(imu, state: SimState, flags: np.ndarray) -> np.ndarray:
    """Concatenate the proprioceptive signals into the 34-entry vector."""
    return np.concatenate(
        (imu.ang_vel, imu.lin_acc, state.q, state.v, flags.astype(float))
    )


def inverse_pd_target(tau, q, v, kp: float, kd: float) -> np.ndarray:
    """Position target implied by a torque: a = q + (tau + kd v) / kp."""
    if kp <= 0:
        raise ValueError("kp must be positive")
    return np.asarray(q) + (np.asarray(tau) + kd * np.asarray(v)) / kp


@dataclass
class DemoRecord:
    task_id: int
    obs: np.ndarray
    action: np.ndarray


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        return (obs - self.mean) / self.std


def fit_norm_stats(obs: np.ndarray) -> NormStats:
    """Per-feature mean and population std over the training split,
    std floored at 1e-8."""
    obs = np.asarray(obs, dtype=float)
    if obs.ndim != 2 or obs.shape[0] < 2:
        raise EmptyDataset("need at least 2 records to fit normalization stats")
    mean = obs.mean(axis=0)
    std = np.maximum(obs.std(axis=0), 1e-8)
    return NormStats(mean=mean, std=std)


@dataclass
class Dataset:
    """Array-backed record store: one row per (task_id, obs, action)."""

    task_names: list[str]
    task_id: np.ndarray
    obs: np.ndarray
    act: np.ndarray
    sample_rate_hz: float = 1000.0

    def __len__(self) -> int:
        return len(self.task_id)

    def records(self):
        for i in range(len(self)):
            yield DemoRecord(int(self.task_id[i]), self.obs[i], self.act[i])

    def for_task(self, task: int) -> "Dataset":
        mask = self.task_id == task
        return Dataset(self.task_names, self.task_id[mask], self.obs[mask], self.act[mask],
                       self.sample_rate_hz)

    @staticmethod
    def from_records(task_names, task_id, obs, act, sample_rate_hz=1000.0) -> "Dataset":
        return Dataset(
            list(task_names),
            np.asarray(task_id, dtype=np.uint32),
            np.asarray(obs, dtype=np.float32).reshape(-1, OBS_DIM),
            np.asarray(act, dtype=np.float32).reshape(-1, ACT_DIM),
            float(sample_rate_hz),
        )


def merge_datasets(parts: list[Dataset], task_names: list[str]) -> Dataset:
    """Re-index several single-task files against a global task table."""
    ids, obs, act = [], [], []
    rate = parts[0].sample_rate_hz if parts else 1000.0
    for part in parts:
        remap = np.array([task_names.index(n) for n in part.task_names], dtype=np.uint32)
        ids.append(remap[part.task_id])
        obs.append(part.obs)
        act.append(part.act)
    return Dataset(
        list(task_names),
        np.concatenate(ids) if ids else np.empty(0, np.uint32),
        np.concatenate(obs) if obs else np.empty((0, OBS_DIM), np.float32),
        np.concatenate(act) if act else np.empty((0, ACT_DIM), np.float32),
        rate,
    )


# ---------------------------------------------------------------------------
# collection campaigns

@dataclass
class CollectionPlan:
    gaits: list[GaitSpec]
    vx_grid: list[float] = field(default_factory=lambda: [0.0, 0.15, -0.15, 0.3, -0.3])
    vy_grid: list[float] = field(default_factory=lambda: [0.0, 0.1, -0.1])
    wz_grid: list[float] = field(default_factory=lambda: [0.0])
    cells_per_gait: int = 10
    samples_per_traj: int = 6000
    settle_time: float = 0.0
    holdout_commands: list[VelocityCommand] = field(
        default_factory=lambda: [VelocityCommand(0.22, 0.0, 0.0), VelocityCommand(-0.08, 0.0, 0.0)]
    )
    seed: int = 0
    # per-cell seeded disturbances: without them the deterministic expert
    # traces measure-zero loops in observation space and the clone never
    # sees recovery behavior, which kills it in closed loop
    push_vel: float = 0.08
    push_ang_vel: float = 0.15
    push_interval: float = 0.4
    init_jitter: float = 0.02
    # DART-style exploration: time-correlated (OU) noise on the joint
    # target actually applied while collecting, with the clean expert
    # action as the label; the recorded states then cover the tube a
    # slightly-wrong policy visits, and the labels teach the correction
    action_noise: float = 0.05
    action_noise_tau: float = 0.05

    def training_commands(self) -> list[VelocityCommand]:
        """Deterministic seeded subsample of the command grid."""
        grid = [
            VelocityCommand(vx, vy, wz)
            for vx in self.vx_grid
            for vy in self.vy_grid
            for wz in self.wz_grid
        ]
        if len(grid) <= self.cells_per_gait:
            return grid
        rng = np.random.default_rng(self.seed)
        idx = np.sort(rng.choice(len(grid), size=self.cells_per_gait, replace=False))
        return [grid[i] for i in idx]

    def validate(self):
        train = {c.as_tuple() for c in self.training_commands()}
        for cmd in self.holdout_commands:
            if cmd.as_tuple() in train:
                raise ValueError("holdout command overlaps the training grid")


@dataclass
class CollectionReport:
    cells_attempted: int = 0
    cells_diverged: int = 0
    clamped_samples: int = 0
    total_samples: int = 0
    diverged_cells: list = field(default_factory=list)

    def summary(self) -> str:
        return (
            f"cells={self.cells_attempted} diverged={self.cells_diverged} "
            f"samples={self.total_samples} clamped={self.clamped_samples}"
        )


def run_expert_trajectory(
    model: RobotModel,
    contact: ContactParams,
    spec: GaitSpec,
    cmd: VelocityCommand,
    settle_time: float,
    n_samples: int,
    dt: float = 1e-3,
    gains: ExpertGains | None = None,
    rng: np.random.Generator | None = None,
    plan: CollectionPlan | None = None,
):
    """Closed-loop expert run; returns (obs, act, clamped_count).

    The expert torque is converted to a position target (inverse PD on
    the raw torque) and fed back through the simulator's PD controller,
    which reproduces the expert torque exactly, clamp included.

    With an rng, the start pose is jittered, the base receives small
    seeded velocity kicks at a fixed cadence, and a time-correlated
    (Ornstein-Uhlenbeck) exploration offset rides on the applied joint
    target while the label stays clean; the recorded data then covers
    the expert's correction funnel instead of one closed orbit.
    """
    gains = gains or ExpertGains()
    state = nominal_stance_state(model, contact=contact)
    if rng is not None and plan is not None and plan.init_jitter > 0:
        state.base_pos[:2] += plan.init_jitter * rng.standard_normal(2)
        state.base_lin_vel[:2] += plan.init_jitter * rng.standard_normal(2)
        state.q += 0.5 * plan.init_jitter * rng.standard_normal(12)
    prev = state
    n_settle = int(round(settle_time / dt))
    push_every = int(round((plan.push_interval if plan else 0.4) / dt)) or 1
    obs_rows = np.empty((n_samples, OBS_DIM))
    act_rows = np.empty((n_samples, ACT_DIM))
    clamped = 0
    k = 0
    noise = np.zeros(12)
    if plan is not None and plan.action_noise_tau > 0:
        decay = np.exp(-dt / plan.action_noise_tau)
        spread = np.sqrt(1.0 - decay * decay)
    else:
        decay, spread = 0.0, 1.0
    for i in range(n_settle + n_samples):
        if rng is not None and plan is not None and i > 0 and i % push_every == 0:
            state = state.copy()
            state.base_lin_vel[:2] += plan.push_vel * rng.standard_normal(2)
            state.base_ang_vel += plan.push_ang_vel * rng.standard_normal(3)
        action = expert_torques(state, model, spec, cmd, state.time, gains, contact.mu)
        target = inverse_pd_target(action.tau_raw, state.q, state.v, model.kp, model.kd)
        if i >= n_settle:
            imu = read_imu(prev, state, dt)
            flags = contact_flags(state, contact)
            obs_rows[k] = build_observation(imu, state, flags)
            act_rows[k] = target
            if np.any(np.abs(action.tau_raw) > model.tau_max):
                clamped += 1
            k += 1
        applied = target
        if rng is not None and plan is not None and plan.action_noise > 0:
            noise = decay * noise + plan.action_noise * spread * rng.standard_normal(12)
            applied = target + noise
        prev = state
        state = step(state, model, contact, applied, dt)
    return obs_rows, act_rows, clamped


def expert_gate_check(
    model: RobotModel,
    contact: ContactParams,
    spec: GaitSpec,
    duration: float = 2.0,
    dt: float = 1e-3,
    gains: ExpertGains | None = None,
) -> bool:
    """Competence gate before collection: the expert must survive a
    zero-command closed-loop run of this gait."""
    gains = gains or ExpertGains()
    state = nominal_stance_state(model, contact=contact)
    cmd = VelocityCommand(0.0, 0.0, 0.0)
    lo = 0.4 * model.nominal_base_height
    hi = 1.6 * model.nominal_base_height
    try:
        for _ in range(int(round(duration / dt))):
            action = expert_torques(state, model, spec, cmd, state.time, gains, contact.mu)
            target = inverse_pd_target(action.tau_raw, state.q, state.v, model.kp, model.kd)
            state = step(state, model, contact, target, dt)
            if not lo <= state.base_pos[2] <= hi:
                return False
    except Diverged:
        return False
    return True


def collect(
    plan: CollectionPlan,
    model: RobotModel,
    contact: ContactParams,
    dt: float = 1e-3,
    gains: ExpertGains | None = None,
):
    """Run the full collection campaign.

    Returns (train, holdout, report) where train and holdout map gait
    name -> single-task Dataset.  Diverged trajectories are discarded;
    more than 10% divergence aborts the campaign.
    """
    plan.validate()
    gains = gains or ExpertGains()
    for spec in plan.gaits:
        if not expert_gate_check(model, contact, spec, gains=gains):
            raise RuntimeError(f"expert failed its competence gate for gait '{spec.name}'")

    train_cmds = plan.training_commands()
    report = CollectionReport()
    train: dict[str, Dataset] = {}
    holdout: dict[str, Dataset] = {}
    for split_tag, (split, cmds, out) in enumerate(
        (("train", train_cmds, train), ("holdout", plan.holdout_commands, holdout))
    ):
        for gait_idx, spec in enumerate(plan.gaits):
            obs_parts, act_parts = [], []
            for cmd_idx, cmd in enumerate(cmds):
                report.cells_attempted += 1
                cell_seed = np.random.SeedSequence([plan.seed, split_tag, gait_idx, cmd_idx])
                try:
                    obs, act, clamped = run_expert_trajectory(
                        model, contact, spec, cmd, plan.settle_time, plan.samples_per_traj,
                        dt, gains, rng=np.random.default_rng(cell_seed), plan=plan,
                    )
                except Diverged as exc:
                    report.cells_diverged += 1
                    report.diverged_cells.append((split, spec.name, cmd.as_tuple(), exc.time))
                    log.warning("discarding diverged cell %s/%s %s", split, spec.name, cmd)
                    continue
                report.clamped_samples += clamped
                report.total_samples += len(obs)
                obs_parts.append(obs)
                act_parts.append(act)
            if obs_parts:
                obs = np.concatenate(obs_parts)
                out[spec.name] = Dataset.from_records(
                    [spec.name], np.zeros(len(obs), np.uint32), obs, np.concatenate(act_parts),
                    1.0 / dt,
                )
    if report.cells_attempted and report.cells_diverged > 0.1 * report.cells_attempted:
        raise RuntimeError(f"collection failed: {report.summary()}")
    return train, holdout, report


# ---------------------------------------------------------------------------
# QGD1 binary format

_MAGIC = b"QGD1"
_VERSION = 1


def write_dataset(path, dataset: Dataset):
    """Write the QGD1 file: little-endian header, task-name table,
    records, trailing CRC32 of all preceding bytes."""
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<IIIIQf", _VERSION, OBS_DIM, ACT_DIM,
                          len(dataset.task_names), len(dataset), dataset.sample_rate_hz))
    for name in dataset.task_names:
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
    for i in range(len(dataset)):
        buf.write(struct.pack("<I", int(dataset.task_id[i])))
        buf.write(dataset.obs[i].astype("<f4").tobytes())
        buf.write(dataset.act[i].astype("<f4").tobytes())
    payload = buf.getvalue()
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<I", crc))


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != _MAGIC:
        raise BadMagic(f"{path}: not a QGD1 file")
    if len(blob) < 4 + 28 + 4:
        raise TruncatedFile(f"{path}: header incomplete")
    payload, crc_bytes = blob[:-4], blob[-4:]
    (crc_stored,) = struct.unpack("<I", crc_bytes)
    version, obs_dim, act_dim, num_tasks, count, rate = struct.unpack_from("<IIIIQf", payload, 4)
    if version != _VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {_VERSION}")
    if obs_dim != OBS_DIM or act_dim != ACT_DIM:
        raise VersionMismatch(f"{path}: unexpected dims {obs_dim}x{act_dim}")
    off = 4 + 28
    names = []
    for _ in range(num_tasks):
        if off + 4 > len(payload):
            raise TruncatedFile(f"{path}: task table incomplete")
        (n,) = struct.unpack_from("<I", payload, off)
        off += 4
        if off + n > len(payload):
            raise TruncatedFile(f"{path}: task table incomplete")
        names.append(payload[off : off + n].decode("utf-8"))
        off += n
    rec_size = 4 + 4 * OBS_DIM + 4 * ACT_DIM
    if off + count * rec_size != len(payload):
        raise TruncatedFile(f"{path}: expected {count} records")
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise ChecksumMismatch(f"{path}: CRC32 mismatch")
    raw = np.frombuffer(payload, dtype=np.uint8, offset=off).reshape(count, rec_size)
    task_id = raw[:, :4].copy().view("<u4").reshape(count)
    obs = raw[:, 4 : 4 + 4 * OBS_DIM].copy().view("<f4").reshape(count, OBS_DIM)
    act = raw[:, 4 + 4 * OBS_DIM :].copy().view("<f4").reshape(count, ACT_DIM)
    return Dataset(names, task_id.astype(np.uint32), obs, act, float(rate))


def export_csv(path, dataset: Dataset):
    """CSV mirror of the record table, header row included."""
    header = ["task_id"] + [f"obs_{i}" for i in range(OBS_DIM)] + [f"act_{i}" for i in range(ACT_DIM)]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(dataset)):
            row = [str(int(dataset.task_id[i]))]
            row += [format(float(x), ".9g") for x in dataset.obs[i]]
            row += [format(float(x), ".9g") for x in dataset.act[i]]
            fh.write(",".join(row) + "\n")


def import_csv(path, task_names, sample_rate_hz=1000.0) -> Dataset:
    """Inverse of export_csv; hook for externally logged data."""
    data = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=float)
    data = np.atleast_2d(data)
    if data.shape[1] != 1 + OBS_DIM + ACT_DIM:
        raise ValueError(f"{path}: expected {1 + OBS_DIM + ACT_DIM} columns")
    return Dataset.from_records(
        task_names, data[:, 0].astype(np.uint32), data[:, 1 : 1 + OBS_DIM],
        data[:, 1 + OBS_DIM :], sample_rate_hz,
    )
