"""Displacement metrics, sampled evaluation, the constant-velocity baseline and timing."""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import SequenceSample
from .graph import KernelConfig, scene_graph
from .model import GaussianPrediction, ModelConfig, ModelParams, forward, param_count


class EvalMode(enum.Enum):
    MEAN = "mean"
    BEST_OF_K = "best_of_k"


@dataclass(frozen=True)
class EvalConfig:
    mode: EvalMode = EvalMode.MEAN
    k: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class Metrics:
    ade: float
    fde: float
    n_sequences: int
    n_pedestrians: int

    def report(self, scene: str, mode: str) -> str:
        return (f"scene: {scene}\nmode: {mode}\nsequences: {self.n_sequences}\n"
                f"pedestrians: {self.n_pedestrians}\nADE: {self.ade:.3f} m\nFDE: {self.fde:.3f} m\n"
                f"{self.line(scene, mode)}\n")

    def line(self, scene: str, mode: str) -> str:
        return f"{scene}\t{mode}\t{self.ade:.6f}\t{self.fde:.6f}"


def _check_pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 3 or pred.shape[2] != 2:
        raise ValueError(f"prediction {pred.shape} and truth {truth.shape} must both be [N, T, 2]")
    return pred, truth


def displacements(pred, truth) -> np.ndarray:
    pred, truth = _check_pair(pred, truth)
    d = pred - truth
    return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1])


def _ordered_mean(x: np.ndarray) -> float:
    # cumsum accumulates strictly left to right, unlike pairwise np.sum
    flat = x.reshape(-1)
    return float(np.cumsum(flat)[-1] / flat.size)


def ade(pred, truth) -> float:
    """Mean Euclidean distance over all pedestrians and predicted frames."""
    return _ordered_mean(displacements(pred, truth))


def fde(pred, truth) -> float:
    """Mean Euclidean distance at the final predicted frame."""
    return _ordered_mean(displacements(pred, truth)[:, -1])


def sample_trajectories(pred: GaussianPrediction, k: int, seed: int | np.random.Generator = 0) -> np.ndarray:
    """``k`` position sets ``[k, N, T_pred, 2]`` drawn pointwise from ``pred``.

    Draws are taken one trajectory set at a time, so the first ``k`` samples
    do not depend on how many more are requested.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mu, sx, sy, rho = pred.mu, pred.sigma_x, pred.sigma_y, pred.rho
    s = np.sqrt(1.0 - rho * rho)
    out = np.empty((k,) + mu.shape)
    for i in range(k):
        z = rng.standard_normal(mu.shape)
        out[i, ..., 0] = mu[..., 0] + sx * z[..., 0]
        out[i, ..., 1] = mu[..., 1] + sy * (rho * z[..., 0] + s * z[..., 1])
    return pred.to_positions(out)


def linear_baseline(obs, t_pred: int = 12) -> np.ndarray:
    """Constant-velocity extrapolation of the last observed displacement."""
    obs = np.asarray(obs, dtype=np.float64)
    last = obs[:, -1]
    step = obs[:, -1] - obs[:, -2] if obs.shape[1] >= 2 else np.zeros_like(last)
    k = np.arange(1, t_pred + 1, dtype=np.float64)[None, :, None]
    return last[:, None, :] + k * step[:, None, :]


def _aggregate(per_seq: list[tuple[float, float, int]]) -> Metrics:
    n_peds = sum(n for _, _, n in per_seq)
    ade_sum = sum(a * n for a, _, n in per_seq)
    fde_sum = sum(f * n for _, f, n in per_seq)
    return Metrics(ade_sum / n_peds, fde_sum / n_peds, len(per_seq), n_peds)


def evaluate_predictor(test: list[SequenceSample],
                       predict: Callable[[SequenceSample], np.ndarray]) -> Metrics:
    """Score a deterministic ``sample -> positions[N, T_pred, 2]`` predictor."""
    if not test:
        raise ValueError("test set is empty")
    per_seq = []
    for s in test:
        p = predict(s)
        per_seq.append((ade(p, s.future), fde(p, s.future), s.n_peds))
    return _aggregate(per_seq)


def evaluate_baseline(test: list[SequenceSample]) -> Metrics:
    return evaluate_predictor(test, lambda s: linear_baseline(s.obs, s.future.shape[1]))


def evaluate_split(checkpoint, test: list[SequenceSample], eval_cfg: EvalConfig = EvalConfig()) -> Metrics:
    """Score a checkpoint on ``test``; in best-of-K mode each sequence keeps the min-ADE sample."""
    if not test:
        raise ValueError("test set is empty")
    cfg: ModelConfig = checkpoint.model_config
    kcfg: KernelConfig = checkpoint.kernel_config
    params = checkpoint.model_params()
    per_seq = []
    for idx, s in enumerate(test):
        if s.obs.shape[1] != cfg.t_obs or s.future.shape[1] != cfg.t_pred:
            raise ValueError(f"sequence {s.key} has {s.obs.shape[1]}+{s.future.shape[1]} frames, "
                             f"checkpoint expects {cfg.t_obs}+{cfg.t_pred}")
        pred = forward(s.obs, scene_graph(s.obs, kcfg, cfg.t_pred), params, cfg)
        if eval_cfg.mode is EvalMode.MEAN:
            p = pred.mean_positions()
            per_seq.append((ade(p, s.future), fde(p, s.future), s.n_peds))
            continue
        samples = sample_trajectories(pred, eval_cfg.k, np.random.default_rng([eval_cfg.seed, idx]))
        scores = [(ade(x, s.future), fde(x, s.future)) for x in samples]
        a, f = min(scores, key=lambda af: af[0])
        per_seq.append((a, f, s.n_peds))
    return _aggregate(per_seq)


# -- benchmark --------------------------------------------------------------

@dataclass(frozen=True)
class BenchResult:
    params: int
    scene_size: int
    repeats: int
    mean_forward_s: float
    std_forward_s: float
    mean_graph_s: float
    std_graph_s: float

    def lines(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.__dict__.items())


def random_scene(n: int, t: int, rng: np.random.Generator) -> np.ndarray:
    start = rng.uniform(0, 15, size=(n, 1, 2))
    vel = rng.normal(0, 0.5, size=(n, 1, 2))
    steps = np.arange(t)[None, :, None] * 0.4
    return start + vel * steps + rng.normal(0, 0.02, size=(n, t, 2))


def benchmark_inference(checkpoint, scene_size: int = 10, repeats: int = 100, warmup: int = 5,
                        seed: int = 0) -> BenchResult:
    """Wall-clock forward-pass timing on a random scene; graph construction timed separately."""
    if repeats < 10:
        raise ValueError("benchmark needs at least 10 repeats")
    cfg: ModelConfig = checkpoint.model_config
    params: ModelParams = checkpoint.model_params()
    obs = random_scene(scene_size, cfg.t_obs, np.random.default_rng(seed))
    graph_t, fwd_t = [], []
    for i in range(warmup + repeats):
        t0 = time.perf_counter()
        adj = scene_graph(obs, checkpoint.kernel_config, cfg.t_pred)
        t1 = time.perf_counter()
        forward(obs, adj, params, cfg)
        t2 = time.perf_counter()
        if i >= warmup:
            graph_t.append(t1 - t0)
            fwd_t.append(t2 - t1)
    return BenchResult(param_count(cfg), scene_size, repeats, float(np.mean(fwd_t)), float(np.std(fwd_t)),
                       float(np.mean(graph_t)), float(np.std(graph_t)))
