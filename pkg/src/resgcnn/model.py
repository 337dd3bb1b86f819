"""Residual graph-convolutional trajectory forecaster.

Layout of one forward pass over a scene with ``N`` pedestrians::

    positions [N, T_obs, 2] -> V [2, T_obs, N]
    embed (1x1 conv, 2 -> C)
    n_fecnn x  spatial:  H = conv1x1(V);  V = PReLU(A * H) + H
               temporal: V = PReLU(conv_kx1(V)) + V
    time_expand: time axis becomes the channel axis, conv T_obs -> T_pred, PReLU
    (n_tpcnn - 1) x  V = PReLU(conv(V)) + V     (still time-as-channels)
    -> raw Gaussian parameters [5, T_pred, N]

No convolution has extent > 1 along the pedestrian axis, so pedestrians only
interact through the adjacency aggregation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .tensor import Parameter, ShapeError, Tensor, conv_grid, frame_aggregate, prelu


@dataclass(frozen=True)
class ModelConfig:
    n_fecnn: int = 2
    n_tpcnn: int = 4
    feature_channels: int = 5
    temporal_kernel: int = 3
    t_obs: int = 8
    t_pred: int = 12
    prelu_init_slope: float = 0.25
    # vertices are per-frame displacements and outputs are integrated from the
    # last observed position; false feeds and predicts absolute meters, which
    # plain SGD at lr 0.01 cannot train (the likelihood overflows immediately)
    relative: bool = True

    def __post_init__(self):
        if self.n_fecnn < 1 or self.n_tpcnn < 1:
            raise ValueError("need at least one FECNN and one TPCNN layer")
        if self.temporal_kernel < 1 or self.temporal_kernel % 2 == 0:
            raise ValueError(f"temporal_kernel must be odd, got {self.temporal_kernel}")
        if self.feature_channels != 5:
            raise ValueError("the Gaussian output head needs feature_channels = 5")
        if self.t_obs < 1 or self.t_pred < 1:
            raise ValueError("t_obs and t_pred must be positive")


class ModelParams:
    """Ordered, uniquely named collection of the network's parameters."""

    def __init__(self, params: list[Parameter]):
        self._by_name: dict[str, Parameter] = {}
        for p in params:
            if p.name in self._by_name:
                raise ValueError(f"duplicate parameter name {p.name!r}")
            self._by_name[p.name] = p

    def __getitem__(self, name: str) -> Parameter:
        return self._by_name[name]

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._by_name.values())

    def __len__(self):
        return len(self._by_name)

    def names(self) -> list[str]:
        return list(self._by_name)

    def count(self) -> int:
        return sum(p.size for p in self)

    def zero_grad(self):
        for p in self:
            p.grad.fill(0.0)

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._by_name.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        missing = set(self._by_name) ^ set(state)
        if missing:
            raise KeyError(f"parameter sets differ: {sorted(missing)}")
        for name, p in self._by_name.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ShapeError("load_state", name, p.shape, value.shape)
            p.data[...] = value

    def zero_(self, *, weights=True, biases=True):
        """Zero conv weights and/or biases in place (PReLU slopes untouched)."""
        for p in self:
            if (weights and p.name.endswith(".weight")) or (biases and p.name.endswith(".bias")):
                p.data.fill(0.0)


def _conv_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, int, int, int], int | None]]:
    """(prefix, kernel shape, PReLU width or None) for every conv, in forward order."""
    c, k = cfg.feature_channels, cfg.temporal_kernel
    layers: list[tuple[str, tuple[int, int, int, int], int | None]] = [("embed", (c, 2, 1, 1), None)]
    for i in range(cfg.n_fecnn):
        layers.append((f"fecnn{i}.spatial", (c, c, 1, 1), c))
        layers.append((f"fecnn{i}.temporal", (c, c, k, 1), c))
    layers.append(("tpcnn0.expand", (cfg.t_pred, cfg.t_obs, k, 1), cfg.t_pred))
    for i in range(1, cfg.n_tpcnn):
        layers.append((f"tpcnn{i}", (cfg.t_pred, cfg.t_pred, k, 1), cfg.t_pred))
    return layers


def param_count(cfg: ModelConfig) -> int:
    """Scalar learnable values: conv weights, biases and PReLU slopes."""
    total = 0
    for _, shape, slopes in _conv_shapes(cfg):
        total += int(np.prod(shape)) + shape[0] + (slopes or 0)
    return total


def init_params(cfg: ModelConfig, rng: np.random.Generator | int = 0) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; constant slopes."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    params = []
    for prefix, shape, slopes in _conv_shapes(cfg):
        bound = 1.0 / np.sqrt(shape[1] * shape[2] * shape[3])
        params.append(Parameter(rng.uniform(-bound, bound, size=shape), f"{prefix}.weight"))
        params.append(Parameter(rng.uniform(-bound, bound, size=shape[0]), f"{prefix}.bias"))
        if slopes:
            params.append(Parameter(np.full(slopes, cfg.prelu_init_slope), f"{prefix}.slope"))
    return ModelParams(params)


class GaussianPrediction:
    """Raw ``[5, T_pred, N]`` output read as (mu_x, mu_y, log sx, log sy, atanh rho).

    In relative mode the Gaussian describes per-frame displacements and
    ``origin[N, 2]`` is the last observed position they are integrated from.
    """

    def __init__(self, raw: Tensor, origin: np.ndarray | None = None):
        if raw.data.ndim != 3 or raw.shape[0] != 5:
            raise ShapeError("GaussianPrediction", "channels", 5, raw.shape[:1])
        self.raw = raw
        self.origin = origin

    @property
    def t_pred(self) -> int:
        return self.raw.shape[1]

    @property
    def n_peds(self) -> int:
        return self.raw.shape[2]

    @property
    def mu(self) -> np.ndarray:
        """Means of the modelled quantity, ``[N, T_pred, 2]``."""
        return self.raw.data[0:2].transpose(2, 1, 0)

    @property
    def sigma_x(self) -> np.ndarray:
        return np.exp(self.raw.data[2]).T

    @property
    def sigma_y(self) -> np.ndarray:
        return np.exp(self.raw.data[3]).T

    @property
    def rho(self) -> np.ndarray:
        return np.tanh(self.raw.data[4]).T

    def to_positions(self, values: np.ndarray) -> np.ndarray:
        """Map modelled quantities ``[..., N, T_pred, 2]`` to absolute positions."""
        if self.origin is None:
            return values
        return self.origin[:, None, :] + np.cumsum(values, axis=-2)

    def mean_positions(self) -> np.ndarray:
        return self.to_positions(self.mu)

    def targets(self, future: np.ndarray) -> np.ndarray:
        """Express absolute ``future[N, T_pred, 2]`` in the modelled quantity."""
        future = np.asarray(future, dtype=np.float64)
        if self.origin is None:
            return future
        prev = np.concatenate([self.origin[:, None, :], future[:, :-1]], axis=1)
        return future - prev


def vertices(obs: np.ndarray, relative: bool = False) -> np.ndarray:
    """``[N, T, 2]`` positions to the ``[2, T, N]`` vertex tensor."""
    obs = np.asarray(obs, dtype=np.float64)
    if relative:
        rel = np.zeros_like(obs)
        rel[:, 1:] = obs[:, 1:] - obs[:, :-1]
        obs = rel
    return np.ascontiguousarray(obs.transpose(2, 1, 0))


def fecnn_spatial(v: Tensor, adjacency: Tensor, params: ModelParams, prefix: str) -> Tensor:
    h = conv_grid(v, params[f"{prefix}.weight"], params[f"{prefix}.bias"])
    return prelu(frame_aggregate(h, adjacency), params[f"{prefix}.slope"]) + h


def fecnn_temporal(v_s: Tensor, params: ModelParams, prefix: str) -> Tensor:
    w = params[f"{prefix}.weight"]
    pad = w.shape[2] // 2
    return prelu(conv_grid(v_s, w, params[f"{prefix}.bias"], (pad, 0)), params[f"{prefix}.slope"]) + v_s


def _time_conv(v_tc: Tensor, params: ModelParams, prefix: str) -> Tensor:
    """Conv + PReLU on a time-as-channels tensor ``[T, C, N]``."""
    w = params[f"{prefix}.weight"]
    if v_tc.shape[0] != w.shape[1]:
        raise ShapeError(prefix, "time extent", w.shape[1], v_tc.shape[0])
    out = conv_grid(v_tc, w, params[f"{prefix}.bias"], (w.shape[2] // 2, 0))
    return prelu(out, params[f"{prefix}.slope"])


def time_expand(v_st: Tensor, params: ModelParams, prefix: str = "tpcnn0.expand") -> Tensor:
    """``[C, T_obs, N] -> [C, T_pred, N]``; no shortcut since the shapes differ."""
    return _time_conv(v_st.permute(1, 0, 2), params, prefix).permute(1, 0, 2)


def tpcnn_layer(v: Tensor, params: ModelParams, prefix: str) -> Tensor:
    v_tc = v.permute(1, 0, 2)
    return (_time_conv(v_tc, params, prefix) + v_tc).permute(1, 0, 2)


def forward(obs: np.ndarray, adjacency: np.ndarray, params: ModelParams,
            cfg: ModelConfig) -> GaussianPrediction:
    """Predict the Gaussian parameters for ``obs[N, T_obs, 2]``.

    ``adjacency[T_obs, N, N]`` must already be normalised.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 3 or obs.shape[2] != 2:
        raise ShapeError("forward", "obs", "[N, T_obs, 2]", obs.shape)
    n, t, _ = obs.shape
    if t != cfg.t_obs:
        raise ShapeError("forward", "T_obs", cfg.t_obs, t)
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if adjacency.shape != (t, n, n):
        raise ShapeError("forward", "adjacency", (t, n, n), adjacency.shape)

    a = Tensor(adjacency)
    v = conv_grid(Tensor(vertices(obs, cfg.relative)), params["embed.weight"], params["embed.bias"])
    for i in range(cfg.n_fecnn):
        v = fecnn_spatial(v, a, params, f"fecnn{i}.spatial")
        v = fecnn_temporal(v, params, f"fecnn{i}.temporal")
    # stay in the time-as-channels layout through the TPCNN stack
    v = _time_conv(v.permute(1, 0, 2), params, "tpcnn0.expand")
    for i in range(1, cfg.n_tpcnn):
        v = _time_conv(v, params, f"tpcnn{i}") + v
    raw = v.permute(1, 0, 2)
    origin = obs[:, -1].copy() if cfg.relative else None
    return GaussianPrediction(raw, origin)
