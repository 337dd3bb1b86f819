"""Per-frame pedestrian interaction graphs.

The raw edge weight between two pedestrians is an inverse-distance kernel
scaled by three corrections: a reachability gate, an overtaking boost and an
opposite-heading boost.  The per-frame matrices are then symmetrically
normalised, GCN style.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FRAME_DT = 0.4
MIN_SPEED = 1e-6


@dataclass(frozen=True)
class KernelConfig:
    spd_thres: float = 0.5
    omega_spd: float = 2.0
    omega_dir: float = 2.0
    dis_floor: float = 2.0
    eps_dist: float = 0.1
    front_cone_half_angle: float = 45.0
    single_self_loop: bool = False

    def __post_init__(self):
        if not self.omega_spd > 1:
            raise ValueError(f"omega_spd must be > 1, got {self.omega_spd}")
        if not self.omega_dir > 1:
            raise ValueError(f"omega_dir must be > 1, got {self.omega_dir}")
        for name in ("spd_thres", "dis_floor", "eps_dist"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0 < self.front_cone_half_angle <= 180:
            raise ValueError("front_cone_half_angle must lie in (0, 180]")


def estimate_velocities(positions: np.ndarray, dt: float = FRAME_DT) -> np.ndarray:
    """Backward differences ``(p[t] - p[t-1]) / dt``; frame 0 copies frame 1.

    Fewer than two frames gives all-zero velocities.
    """
    positions = np.asarray(positions, dtype=np.float64)
    vel = np.zeros_like(positions)
    if positions.shape[1] < 2:
        return vel
    vel[:, 1:] = (positions[:, 1:] - positions[:, :-1]) / dt
    vel[:, 0] = vel[:, 1]
    return vel


def direction_sector(velocity) -> int | None:
    """Heading sector 0..7 (sector 0 due east, counterclockwise), ``None`` if standing."""
    vx, vy = float(velocity[0]), float(velocity[1])
    if math.hypot(vx, vy) < MIN_SPEED:
        return None
    angle = math.degrees(math.atan2(vy, vx)) % 360.0
    return int(math.floor((angle + 22.5) / 45.0)) % 8


def _sectors(vel: np.ndarray, speed: np.ndarray) -> np.ndarray:
    """Vectorised :func:`direction_sector`; -1 marks the undefined sector."""
    angle = np.degrees(np.arctan2(vel[..., 1], vel[..., 0])) % 360.0
    sec = np.floor((angle + 22.5) / 45.0).astype(np.int64) % 8
    return np.where(speed < MIN_SPEED, -1, sec)


def _in_front(pos_a, vel_a, speed_a, pos_b, cos_half) -> bool:
    d = np.subtract(pos_b, pos_a)
    dn = math.sqrt(d[0] * d[0] + d[1] * d[1])
    if dn == 0.0 or speed_a == 0.0:
        return False
    return float(d[0] * vel_a[0] + d[1] * vel_a[1]) >= dn * speed_a * cos_half


def kernel_weight(pos_i, pos_j, vel_i, vel_j, cfg: KernelConfig,
                  t_pred: int = 12, dt: float = FRAME_DT) -> float:
    """Corrected inverse-distance weight for an ordered pair ``i != j``."""
    dx = float(pos_i[0]) - float(pos_j[0])
    dy = float(pos_i[1]) - float(pos_j[1])
    dist = math.sqrt(dx * dx + dy * dy)
    vix, viy, vjx, vjy = float(vel_i[0]), float(vel_i[1]), float(vel_j[0]), float(vel_j[1])
    sp_i = math.sqrt(vix * vix + viy * viy)
    sp_j = math.sqrt(vjx * vjx + vjy * vjy)
    reach = max(max(sp_i, sp_j) * t_pred * dt, cfg.dis_floor)
    w_dis = 1.0 if dist <= reach else 0.0

    sec_i, sec_j = direction_sector(vel_i), direction_sector(vel_j)
    moving = sec_i is not None and sec_j is not None
    cos_half = math.cos(math.radians(cfg.front_cone_half_angle))
    w_spd = 1.0
    if moving:
        fast_i, fast_j = sp_i >= cfg.spd_thres, sp_j >= cfg.spd_thres
        if (fast_i and not fast_j and _in_front(pos_i, vel_i, sp_i, pos_j, cos_half)) or \
                (fast_j and not fast_i and _in_front(pos_j, vel_j, sp_j, pos_i, cos_half)):
            w_spd = cfg.omega_spd
    w_dir = cfg.omega_dir if moving and (sec_i - sec_j) % 8 == 4 else 1.0
    return (w_dis * w_spd * w_dir) / max(dist, cfg.eps_dist)


def build_adjacency(positions: np.ndarray, cfg: KernelConfig, t_pred: int = 12,
                    dt: float = FRAME_DT) -> np.ndarray:
    """Raw symmetric adjacency ``[T, N, N]`` for observed ``positions[N, T, 2]``.

    Vectorised over frames and pairs; agrees bit for bit with calling
    :func:`kernel_weight` on every off-diagonal pair.
    """
    pos = np.asarray(positions, dtype=np.float64).transpose(1, 0, 2)  # [T, N, 2]
    vel = estimate_velocities(positions, dt).transpose(1, 0, 2)
    t, n, _ = pos.shape
    speed = np.sqrt(vel[..., 0] * vel[..., 0] + vel[..., 1] * vel[..., 1])  # [T, N]
    sec = _sectors(vel, speed)

    # d[t, i, j] = pos[t, j] - pos[t, i]
    d = pos[:, None, :, :] - pos[:, :, None, :]
    dist = np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1])
    reach = np.maximum(np.maximum(speed[:, :, None], speed[:, None, :]) * t_pred * dt, cfg.dis_floor)
    w_dis = np.where(dist <= reach, 1.0, 0.0)

    moving = (sec[:, :, None] >= 0) & (sec[:, None, :] >= 0)
    fast = speed >= cfg.spd_thres
    cos_half = math.cos(math.radians(cfg.front_cone_half_angle))
    # j lies in i's front cone
    dot = d[..., 0] * vel[:, :, None, 0] + d[..., 1] * vel[:, :, None, 1]
    front = (dist > 0) & (speed[:, :, None] > 0) & (dot >= dist * speed[:, :, None] * cos_half)
    overtake = fast[:, :, None] & ~fast[:, None, :] & front
    overtake = (overtake | overtake.transpose(0, 2, 1)) & moving
    w_spd = np.where(overtake, cfg.omega_spd, 1.0)
    opposite = moving & ((sec[:, :, None] - sec[:, None, :]) % 8 == 4)
    w_dir = np.where(opposite, cfg.omega_dir, 1.0)

    adj = (w_dis * w_spd * w_dir) / np.maximum(dist, cfg.eps_dist)
    idx = np.arange(n)
    adj[:, idx, idx] = 1.0
    return adj


def normalize_adjacency(raw: np.ndarray, add_self_loops: bool = True) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` per frame, ``D`` the degree matrix of ``A + I``.

    With ``add_self_loops=False`` the identity is not added again (``A``
    already carries its unit diagonal).
    """
    raw = np.asarray(raw, dtype=np.float64)
    m = raw + np.eye(raw.shape[-1]) if add_self_loops else raw.copy()
    deg = m.sum(axis=-1)
    # outer product is exactly symmetric, so the result is too
    return m / np.sqrt(deg[:, :, None] * deg[:, None, :])


def scene_graph(positions: np.ndarray, cfg: KernelConfig, t_pred: int = 12,
                dt: float = FRAME_DT) -> np.ndarray:
    """Normalised adjacency for a scene, ready for the model."""
    raw = build_adjacency(positions, cfg, t_pred, dt)
    return normalize_adjacency(raw, add_self_loops=not cfg.single_self_loop)
