"""From-scratch dense network stack for behavior cloning.

Two architectures share one parameter layout:

* multi_task: a shared trunk of two hidden layers feeding one head per
  gait, each head a hidden layer plus a linear output.  Only the head
  matching a sample's task id sees its gradient; the trunk sees all.
* single_task: three hidden layers and a linear output, no task
  conditioning (the task id is ignored).

All hidden layers use ELU.  Inputs are z-score normalized with the
statistics carried inside the network, so a weights file is
self-contained for inference.  Arithmetic is float64; files store
float32.  The training objective is the sum over tasks of the summed
squared errors; minibatch gradients use the per-sample mean (a scalar
rescaling of the same direction).
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .dataset import ACT_DIM, OBS_DIM, Dataset, NormStats, fit_norm_stats
from .errors import (
    BadMagic,
    ChecksumMismatch,
    EmptyDataset,
    NonFiniteLoss,
    ShapeMismatch,
    TruncatedFile,
    UnknownTask,
    VersionMismatch,
)

MULTI_TASK = "multi_task"
SINGLE_TASK = "single_task"


def elu(x):
    """ELU with alpha = 1: x for x > 0, exp(x) - 1 otherwise."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


@dataclass
class ArchSpec:
    kind: str = MULTI_TASK
    input_dim: int = OBS_DIM
    output_dim: int = ACT_DIM
    hidden_width: int = 128
    num_tasks: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (MULTI_TASK, SINGLE_TASK):
            raise ValueError(f"unknown architecture kind '{self.kind}'")
        if self.kind == SINGLE_TASK:
            self.num_tasks = 1
        if self.hidden_width < 1 or self.num_tasks < 1:
            raise ValueError("hidden_width and num_tasks must be >= 1")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    val_fraction: float = 0.1
    seed: int = 0
    # std of Gaussian noise added to raw observation features during
    # training, expressed in units of each feature's own std (a Jacobian
    # regularizer: keeps the policy tame one step off the data manifold).
    # Validation always runs on clean data.
    input_noise: float = 0.05

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.val_fraction <= 0.5:
            raise ValueError("val_fraction must be in (0, 0.5]")
        if self.input_noise < 0:
            raise ValueError("input_noise must be >= 0")


class MtlNetwork:
    """Parameters plus normalization stats; see module docstring.

    Weight matrices are (out_features, in_features); layers are stored
    trunk-first, then per-head (hidden, output) in task order.
    """

    def __init__(self, arch: ArchSpec, norm: NormStats, params: list[np.ndarray] | None = None):
        self.arch = arch
        self.norm = norm
        if params is None:
            params = _init_params(arch)
        self.params = params

    # layout helpers ------------------------------------------------------
    @property
    def n_trunk(self) -> int:
        return 2 if self.arch.kind == MULTI_TASK else 3

    def trunk(self):
        return self.params[: 2 * self.n_trunk]

    def head(self, k: int):
        n = 2 * self.n_trunk
        per_head = 4 if self.arch.kind == MULTI_TASK else 2
        return self.params[n + per_head * k : n + per_head * (k + 1)]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "MtlNetwork":
        return MtlNetwork(
            self.arch,
            NormStats(self.norm.mean.copy(), self.norm.std.copy()),
            [p.copy() for p in self.params],
        )

    # inference -----------------------------------------------------------
    def _check_task(self, task_id: int):
        if self.arch.kind == SINGLE_TASK:
            return 0
        if not 0 <= task_id < self.arch.num_tasks:
            raise UnknownTask(f"task id {task_id} outside 0..{self.arch.num_tasks - 1}")
        return task_id

    def trunk_features(self, obs: np.ndarray) -> np.ndarray:
        x = self.norm.normalize(np.asarray(obs, dtype=float))
        layers = self.trunk()
        for i in range(self.n_trunk):
            W, b = layers[2 * i], layers[2 * i + 1]
            x = elu(x @ W.T + b)
        return x

    def forward(self, obs: np.ndarray, task_id: int) -> np.ndarray:
        """Joint position targets for one observation or a batch."""
        task_id = self._check_task(task_id)
        obs = np.asarray(obs, dtype=float)
        single = obs.ndim == 1
        h = self.trunk_features(np.atleast_2d(obs))
        head = self.head(task_id)
        if self.arch.kind == MULTI_TASK:
            Wh, bh, Wo, bo = head
            h = elu(h @ Wh.T + bh)
        else:
            Wo, bo = head
        out = h @ Wo.T + bo
        return out[0] if single else out


def _init_params(arch: ArchSpec) -> list[np.ndarray]:
    """He-style init scaled for ELU (std = sqrt(1.55 / fan_in)), zero biases."""
    rng = np.random.default_rng(arch.seed)
    h, d_in, d_out = arch.hidden_width, arch.input_dim, arch.output_dim

    def dense(n_out, n_in):
        W = rng.standard_normal((n_out, n_in)) * np.sqrt(1.55 / n_in)
        return [W, np.zeros(n_out)]

    params: list[np.ndarray] = []
    if arch.kind == MULTI_TASK:
        params += dense(h, d_in) + dense(h, h)
        for _ in range(arch.num_tasks):
            params += dense(h, h) + dense(d_out, h)
    else:
        params += dense(h, d_in) + dense(h, h) + dense(h, h)
        params += dense(d_out, h)
    return params


# ---------------------------------------------------------------------------
# loss and gradients

def total_loss(net: MtlNetwork, batches: dict[int, tuple[np.ndarray, np.ndarray]]):
    """Objective over per-task batches: sum of summed squared errors.

    Returns (raw_sum, per_sample_mean, per_task_sums) accumulated in
    fixed task-then-record order.
    """
    raw = 0.0
    count = 0
    per_task = {}
    for task in sorted(batches):
        obs, act = batches[task]
        if len(obs) == 0:
            per_task[task] = 0.0
            continue
        err = net.forward(obs, task) - act
        s = float(np.sum(err * err))
        per_task[task] = s
        raw += s
        count += len(obs)
    mean = raw / count if count else 0.0
    return raw, mean, per_task


def _forward_cached(net: MtlNetwork, obs: np.ndarray, task_id: int):
    """Forward pass keeping pre-activations for backprop."""
    x = net.norm.normalize(np.asarray(obs, dtype=float))
    acts = [x]
    zs = []
    layers = net.trunk()
    for i in range(net.n_trunk):
        W, b = layers[2 * i], layers[2 * i + 1]
        z = acts[-1] @ W.T + b
        zs.append(z)
        acts.append(elu(z))
    head = net.head(task_id)
    if net.arch.kind == MULTI_TASK:
        Wh, bh, Wo, bo = head
        z = acts[-1] @ Wh.T + bh
        zs.append(z)
        acts.append(elu(z))
    else:
        Wo, bo = head
    out = acts[-1] @ Wo.T + bo
    return out, acts, zs


def backward(net: MtlNetwork, batches: dict[int, tuple[np.ndarray, np.ndarray]], scale: str = "mean"):
    """Exact reverse-mode gradients of the batch loss for every parameter.

    Samples of task k contribute only to head k and the trunk.  With
    scale="mean" the loss is the per-sample mean of squared errors
    (used for optimization); "sum" matches the raw objective.
    """
    grads = [np.zeros_like(p) for p in net.params]
    n_total = sum(len(obs) for obs, _ in batches.values())
    if n_total == 0:
        return grads, 0.0
    factor = 1.0 / n_total if scale == "mean" else 1.0

    loss = 0.0
    per_head = 4 if net.arch.kind == MULTI_TASK else 2
    for task in sorted(batches):
        obs, act = batches[task]
        if len(obs) == 0:
            continue
        task_idx = net._check_task(task)
        out, acts, zs = _forward_cached(net, obs, task_idx)
        err = out - np.asarray(act, dtype=float)
        loss += float(np.sum(err * err))

        base = 2 * net.n_trunk + per_head * task_idx
        delta = 2.0 * factor * err
        if net.arch.kind == MULTI_TASK:
            Wh, bh, Wo, bo = net.head(task_idx)
            grads[base + 2] += delta.T @ acts[-1]          # Wo
            grads[base + 3] += delta.sum(axis=0)           # bo
            delta = (delta @ Wo) * elu_grad(zs[-1])
            grads[base + 0] += delta.T @ acts[-2]          # Wh
            grads[base + 1] += delta.sum(axis=0)           # bh
            delta = delta @ Wh
            depth = net.n_trunk
        else:
            Wo, bo = net.head(task_idx)
            grads[base + 0] += delta.T @ acts[-1]
            grads[base + 1] += delta.sum(axis=0)
            delta = delta @ Wo
            depth = net.n_trunk
        layers = net.trunk()
        for i in range(depth - 1, -1, -1):
            delta = delta * elu_grad(zs[i])
            grads[2 * i] += delta.T @ acts[i]
            grads[2 * i + 1] += delta.sum(axis=0)
            if i > 0:
                delta = delta @ layers[2 * i]
    return grads, loss * factor


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @staticmethod
    def for_params(params) -> "AdamState":
        return AdamState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, cfg: TrainConfig):
    """Standard bias-corrected Adam update, in place."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


# ---------------------------------------------------------------------------
# training loop

@dataclass
class EpochRecord:
    epoch: int
    train_loss: dict[int, float]
    val_loss: dict[int, float]


def _split_train_val(n: int, val_fraction: float, rng: np.random.Generator):
    idx = rng.permutation(n)
    n_val = max(1, int(round(n * val_fraction)))
    return idx[n_val:], idx[:n_val]


def _task_mean_loss(net: MtlNetwork, obs: np.ndarray, act: np.ndarray, task: int,
                    chunk: int = 8192) -> float:
    """Per-sample mean of squared 12-dim error, chunked for memory."""
    total = 0.0
    for i in range(0, len(obs), chunk):
        err = net.forward(obs[i : i + chunk], task) - act[i : i + chunk]
        total += float(np.sum(err * err))
    return total / max(len(obs), 1)


def train(
    datasets: dict[int, Dataset],
    arch: ArchSpec,
    cfg: TrainConfig,
    log_fn=None,
):
    """Train on per-task datasets; returns (best network, epoch records).

    Minibatches are balanced across tasks: each step draws an equal
    share of every task's shuffled stream.  Validation loss is tracked
    per task; the returned parameters are the snapshot with the best
    total validation loss.
    """
    if not datasets:
        raise EmptyDataset("no training datasets")
    tasks = sorted(datasets)
    if arch.kind == MULTI_TASK and len(tasks) != arch.num_tasks:
        raise ValueError("num_tasks must match the number of datasets")

    rng = np.random.default_rng(cfg.seed)
    splits = {}
    for task in tasks:
        ds = datasets[task]
        if len(ds) < 4:
            raise EmptyDataset(f"task {task} has too few records")
        tr, va = _split_train_val(len(ds), cfg.val_fraction, rng)
        obs = ds.obs.astype(float)
        act = ds.act.astype(float)
        splits[task] = (obs[tr], act[tr], obs[va], act[va])

    train_obs_all = np.concatenate([splits[t][0] for t in tasks])
    norm = fit_norm_stats(train_obs_all)
    net = MtlNetwork(arch, norm)
    adam = AdamState.for_params(net.params)

    share = max(cfg.batch_size // len(tasks), 1)
    steps_per_epoch = max(1, min(len(splits[t][0]) // share for t in tasks))

    best_total = np.inf
    best_params = None
    history: list[EpochRecord] = []
    for epoch in range(1, cfg.epochs + 1):
        order = {t: rng.permutation(len(splits[t][0])) for t in tasks}
        running = {t: 0.0 for t in tasks}
        running_n = {t: 0 for t in tasks}
        for s in range(steps_per_epoch):
            batch = {}
            for t in tasks:
                sel = order[t][s * share : (s + 1) * share]
                obs_b = splits[t][0][sel]
                if cfg.input_noise > 0:
                    obs_b = obs_b + cfg.input_noise * norm.std * rng.standard_normal(obs_b.shape)
                batch[t] = (obs_b, splits[t][1][sel])
            grads, _ = backward(net, batch, scale="mean")
            adam_step(net.params, grads, adam, cfg)
            for t in tasks:
                obs_b, act_b = batch[t]
                err = net.forward(obs_b, t) - act_b
                running[t] += float(np.sum(err * err))
                running_n[t] += len(obs_b)

        train_loss = {t: running[t] / max(running_n[t], 1) for t in tasks}
        val_loss = {t: _task_mean_loss(net, splits[t][2], splits[t][3], t) for t in tasks}
        total_val = sum(val_loss.values())
        if not np.isfinite(total_val) or not all(np.isfinite(v) for v in train_loss.values()):
            raise NonFiniteLoss(epoch)
        history.append(EpochRecord(epoch, train_loss, val_loss))
        if total_val < best_total:
            best_total = total_val
            best_params = [p.copy() for p in net.params]
        if log_fn:
            log_fn(epoch, train_loss, val_loss)

    if best_params is not None:
        net.params = best_params
    return net, history


# ---------------------------------------------------------------------------
# QMP1 weights file

_MAGIC = b"QMP1"
_VERSION = 1
_KIND_CODE = {MULTI_TASK: 0, SINGLE_TASK: 1}
_KIND_NAME = {v: k for k, v in _KIND_CODE.items()}


def save_weights(path, net: MtlNetwork):
    """QMP1: header, f32 norm stats, per-layer (rows, cols, W, b), CRC32."""
    buf = io.BytesIO()
    buf.write(_MAGIC)
    arch = net.arch
    buf.write(struct.pack("<IBIIII", _VERSION, _KIND_CODE[arch.kind], arch.input_dim,
                          arch.output_dim, arch.hidden_width, arch.num_tasks))
    buf.write(net.norm.mean.astype("<f4").tobytes())
    buf.write(net.norm.std.astype("<f4").tobytes())
    for i in range(0, len(net.params), 2):
        W, b = net.params[i], net.params[i + 1]
        buf.write(struct.pack("<II", W.shape[0], W.shape[1]))
        buf.write(W.astype("<f4").tobytes())
        buf.write(b.astype("<f4").tobytes())
    payload = buf.getvalue()
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def _expected_shapes(arch: ArchSpec):
    h, d_in, d_out = arch.hidden_width, arch.input_dim, arch.output_dim
    shapes = []
    if arch.kind == MULTI_TASK:
        shapes += [(h, d_in), (h, h)]
        for _ in range(arch.num_tasks):
            shapes += [(h, h), (d_out, h)]
    else:
        shapes += [(h, d_in), (h, h), (h, h), (d_out, h)]
    return shapes


def load_weights(path) -> MtlNetwork:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != _MAGIC:
        raise BadMagic(f"{path}: not a QMP1 file")
    if len(blob) < 4 + 21 + 4:
        raise TruncatedFile(f"{path}: header incomplete")
    payload, crc_bytes = blob[:-4], blob[-4:]
    (crc_stored,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise ChecksumMismatch(f"{path}: CRC32 mismatch")
    version, kind_code, d_in, d_out, h, k = struct.unpack_from("<IBIIII", payload, 4)
    if version != _VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {_VERSION}")
    if kind_code not in _KIND_NAME:
        raise ShapeMismatch(f"{path}: unknown architecture code {kind_code}")
    arch = ArchSpec(kind=_KIND_NAME[kind_code], input_dim=d_in, output_dim=d_out,
                    hidden_width=h, num_tasks=k)
    off = 4 + 21
    if off + 8 * d_in > len(payload):
        raise TruncatedFile(f"{path}: normalization block incomplete")
    mean = np.frombuffer(payload, dtype="<f4", count=d_in, offset=off).astype(float)
    off += 4 * d_in
    std = np.frombuffer(payload, dtype="<f4", count=d_in, offset=off).astype(float)
    off += 4 * d_in

    params = []
    for rows, cols in _expected_shapes(arch):
        if off + 8 > len(payload):
            raise TruncatedFile(f"{path}: layer header incomplete")
        r, c = struct.unpack_from("<II", payload, off)
        off += 8
        if (r, c) != (rows, cols):
            raise ShapeMismatch(f"{path}: layer shape {(r, c)}, expected {(rows, cols)}")
        need = 4 * (r * c + r)
        if off + need > len(payload):
            raise TruncatedFile(f"{path}: layer data incomplete")
        W = np.frombuffer(payload, dtype="<f4", count=r * c, offset=off).astype(float).reshape(r, c)
        off += 4 * r * c
        b = np.frombuffer(payload, dtype="<f4", count=r, offset=off).astype(float)
        off += 4 * r
        params += [W, b]
    if off != len(payload):
        raise ShapeMismatch(f"{path}: {len(payload) - off} trailing bytes")
    return MtlNetwork(arch, NormStats(mean, std), params)
