"""Bivariate Gaussian likelihood training and checkpoint files."""
from __future__ import annotations

import io
import json
import logging
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import kv
from .data import DatasetSplit, SequenceSample
from .graph import KernelConfig, scene_graph
from .model import GaussianPrediction, ModelConfig, ModelParams, forward, init_params
from .tensor import Tensor, sgd_step

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    epochs: int = 200
    lr_initial: float = 0.01
    lr_late: float = 0.002
    lr_switch_epoch: int = 150
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if not self.lr_initial > 0 or not self.lr_late > 0:
            raise ValueError("learning rates must be positive")
        if not 0 <= self.lr_switch_epoch < self.epochs:
            raise ValueError(f"lr_switch_epoch must lie in [0, epochs), got {self.lr_switch_epoch}")


class NonFiniteLossError(FloatingPointError):
    def __init__(self, message: str, where=None):
        self.where = where
        super().__init__(message)


class TrainingAborted(RuntimeError):
    def __init__(self, sample_key: str, cause: Exception):
        self.sample_key = sample_key
        super().__init__(f"training aborted on sequence {sample_key}: {cause}")


def _log_one_minus_tanh2(r: np.ndarray) -> np.ndarray:
    # log(1 - tanh(r)^2) = log(sech(r)^2), stable for large |r|
    a = np.abs(r)
    return 2.0 * (math.log(2.0) - a - np.log1p(np.exp(-2.0 * a)))


def gaussian_nll(pred: GaussianPrediction, target: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of ``target[N, T_pred, 2]`` under ``pred``.

    Per point: ``log(2 pi sx sy sqrt(1 - rho^2)) + z / (2 (1 - rho^2))`` with
    ``z = (dx/sx)^2 + (dy/sy)^2 - 2 rho dx dy / (sx sy)``.
    """
    raw = pred.raw
    t_pred, n = raw.shape[1], raw.shape[2]
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (n, t_pred, 2):
        raise ValueError(f"target shape {target.shape} does not match prediction ({n}, {t_pred}, 2)")
    tgt = pred.targets(target).transpose(2, 1, 0)  # [2, T, N]
    mx, my, lsx, lsy, r = raw.data
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        sx, sy, rho = np.exp(lsx), np.exp(lsy), np.tanh(r)
        q = 1.0 - rho * rho
        a = (tgt[0] - mx) / sx
        b = (tgt[1] - my) / sy
        z = a * a + b * b - 2.0 * rho * a * b
        per_point = LOG_2PI + lsx + lsy + 0.5 * _log_one_minus_tanh2(r) + z / (2.0 * q)
    if not np.all(np.isfinite(per_point)):
        t, i = np.argwhere(~np.isfinite(per_point))[0]
        raise NonFiniteLossError(f"non-finite likelihood at pedestrian {i}, frame {t}", (int(i), int(t)))
    count = per_point.size
    loss = per_point.sum() / count

    def backward(g):
        scale = g / count
        da = (a - rho * b) / q
        db = (b - rho * a) / q
        grad = np.empty_like(raw.data)
        grad[0] = -da / sx
        grad[1] = -db / sy
        grad[2] = 1.0 - a * da
        grad[3] = 1.0 - b * db
        grad[4] = -rho - a * b + rho * z / q
        return (grad * scale,)

    if raw.requires_grad:
        return Tensor(np.asarray(loss), True, (raw,), backward)
    return Tensor(np.asarray(loss))


def lr_at_epoch(epoch: int, cfg: TrainConfig) -> float:
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    return cfg.lr_initial if epoch < cfg.lr_switch_epoch else cfg.lr_late


# -- checkpoints ------------------------------------------------------------

MAGIC = b"RGCN"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    model_config: ModelConfig
    kernel_config: KernelConfig
    parameters: dict[str, np.ndarray]   # float32
    epoch: int = 0
    rng_state: bytes = b""
    format_version: int = FORMAT_VERSION
    losses: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.parameters = {k: np.asarray(v, dtype=np.float32) for k, v in self.parameters.items()}

    def model_params(self) -> ModelParams:
        params = init_params(self.model_config, 0)
        params.load_state(self.parameters)
        return params

    @classmethod
    def from_params(cls, params: ModelParams, model_cfg: ModelConfig, kernel_cfg: KernelConfig,
                    epoch: int = 0, rng_state: bytes = b"") -> "Checkpoint":
        return cls(model_cfg, kernel_cfg, params.state(), epoch, rng_state)


def _pack_bytes(buf: io.BytesIO, data: bytes):
    buf.write(struct.pack("<I", len(data)))
    buf.write(data)


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", ckpt.format_version))
    _pack_bytes(buf, kv.dump(ckpt.model_config).encode())
    _pack_bytes(buf, kv.dump(ckpt.kernel_config).encode())
    buf.write(struct.pack("<I", ckpt.epoch))
    _pack_bytes(buf, ckpt.rng_state)
    buf.write(struct.pack("<I", len(ckpt.parameters)))
    for name, value in ckpt.parameters.items():
        _pack_bytes(buf, name.encode())
        buf.write(struct.pack("<I", value.ndim))
        buf.write(struct.pack(f"<{value.ndim}I", *value.shape))
        buf.write(value.astype("<f4").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(f"checkpoint truncated at byte {len(self.data)} (needed {self.pos + n})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())


def checkpoint_from_bytes(data: bytes) -> Checkpoint:
    rd = _Reader(data)
    magic = rd.take(4)
    if magic != MAGIC:
        raise CheckpointMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = rd.u32()
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    model_cfg = kv.build(ModelConfig, kv.parse_lines(rd.blob().decode()), "model.")
    kernel_cfg = kv.build(KernelConfig, kv.parse_lines(rd.blob().decode()), "kernel.")
    epoch = rd.u32()
    rng_state = rd.blob()
    params = {}
    for _ in range(rd.u32()):
        name = rd.blob().decode()
        rank = rd.u32()
        shape = struct.unpack(f"<{rank}I", rd.take(4 * rank))
        count = int(np.prod(shape)) if rank else 1
        params[name] = np.frombuffer(rd.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    if rd.pos != len(data):
        raise CheckpointError(f"{len(data) - rd.pos} trailing bytes after parameter records")
    return Checkpoint(model_cfg, kernel_cfg, params, epoch, rng_state, version)


def write_atomic(path: str | os.PathLike, data: bytes | str):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(data.encode() if isinstance(data, str) else data)
    os.replace(tmp, path)


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike):
    write_atomic(path, checkpoint_bytes(ckpt))


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    return checkpoint_from_bytes(Path(path).read_bytes())


# -- training loop ----------------------------------------------------------

def precompute_graphs(samples: list[SequenceSample], kernel_cfg: KernelConfig, t_pred: int,
                      threads: int = 1) -> list[np.ndarray]:
    def one(s):
        return scene_graph(s.obs, kernel_cfg, t_pred)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, samples))
    return [one(s) for s in samples]


def sequence_loss(sample: SequenceSample, adjacency: np.ndarray, params: ModelParams,
                  cfg: ModelConfig) -> Tensor:
    return gaussian_nll(forward(sample.obs, adjacency, params, cfg), sample.future)


def apply_accumulated(params: ModelParams, count: int, lr: float):
    """Average the gradients of ``count`` accumulated sequences, then take an SGD step."""
    for p in params:
        p.grad /= count
    sgd_step(params, lr)


def train(split: DatasetSplit, model_cfg: ModelConfig, kernel_cfg: KernelConfig,
          train_cfg: TrainConfig, *, threads: int = 1,
          on_epoch: Callable[[int, float], None] | None = None,
          params: ModelParams | None = None) -> Checkpoint:
    """Seeded SGD over single-sequence forward/backward passes.

    Gradients are accumulated over ``batch_size`` sequences (the last batch of
    an epoch may be smaller) and averaged before each step.  Returns the final
    checkpoint; ``checkpoint.losses`` holds the mean loss of every epoch.
    """
    samples = split.train
    if not samples:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(train_cfg.seed)
    if params is None:
        params = init_params(model_cfg, rng)
    graphs = precompute_graphs(samples, kernel_cfg, model_cfg.t_pred, threads)

    losses: list[float] = []
    for epoch in range(train_cfg.epochs):
        lr = lr_at_epoch(epoch, train_cfg)
        order = rng.permutation(len(samples))
        total, pending = 0.0, 0
        params.zero_grad()
        for idx in order:
            sample = samples[idx]
            try:
                loss = sequence_loss(sample, graphs[idx], params, model_cfg)
                loss.backward()
            except FloatingPointError as exc:
                raise TrainingAborted(sample.key, exc) from exc
            total += loss.item()
            pending += 1
            if pending == train_cfg.batch_size:
                _step(params, pending, lr, sample)
                pending = 0
        if pending:
            _step(params, pending, lr, samples[order[-1]])
        mean = total / len(samples)
        losses.append(mean)
        log.info("epoch %d lr %g mean loss %.6f", epoch, lr, mean)
        if on_epoch is not None:
            on_epoch(epoch, mean)

    state = json.dumps(rng.bit_generator.state).encode()
    ckpt = Checkpoint.from_params(params, model_cfg, kernel_cfg, train_cfg.epochs, state)
    ckpt.losses = losses
    return ckpt


def _step(params: ModelParams, count: int, lr: float, last: SequenceSample):
    try:
        apply_accumulated(params, count, lr)
    except FloatingPointError as exc:
        raise TrainingAborted(last.key, exc) from exc


def loss_log_text(losses: list[float]) -> str:
    return "".join(f"{i}\t{v!r}\n" for i, v in enumerate(losses))
