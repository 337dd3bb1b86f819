"""Synthetic crowd scenes written in the ETH/UCY annotation format.

Pedestrians enter at the border of a rectangular area, walk toward a goal on
the opposite side with a preferred speed, and repel each other with a short
range exponential force.  Some small groups stand still.  Recorded positions
carry a small per-frame labelling jitter.  Positions are
sampled every 0.4 s and frame ids advance by 10, as in the public
annotations.  Useful for tests and for exercising the pipeline without the
real datasets.

    python -m resgcnn.synthetic OUT_DIR [--frames 600] [--seed 0]
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SIM_DT = 0.1
SUBSTEPS = 4  # 4 x 0.1 s per annotated frame
FRAME_STEP = 10


@dataclass(frozen=True)
class ScenePreset:
    width: float = 15.0
    height: float = 12.0
    spawn_rate: float = 0.4        # pedestrians per annotated frame
    speed_mean: float = 1.2
    speed_std: float = 0.25
    standing_groups: int = 1
    horizontal_bias: float = 0.8   # share of pedestrians crossing along x
    annotation_noise: float = 0.02  # m, per-frame labelling jitter


PRESETS = {
    "eth": ScenePreset(width=14, height=16, spawn_rate=0.25, speed_mean=1.5, horizontal_bias=0.2),
    "hotel": ScenePreset(width=8, height=12, spawn_rate=0.25, speed_mean=1.0, standing_groups=2,
                         horizontal_bias=0.1),
    "univ": ScenePreset(width=15, height=14, spawn_rate=0.6, speed_mean=0.7, standing_groups=3,
                        horizontal_bias=0.5),
    "zara1": ScenePreset(width=15, height=12, spawn_rate=0.3, speed_mean=1.1, horizontal_bias=0.9),
    "zara2": ScenePreset(width=15, height=12, spawn_rate=0.45, speed_mean=1.1, standing_groups=2,
                         horizontal_bias=0.9),
}


def simulate(preset: ScenePreset, n_frames: int, seed: int = 0) -> list[tuple[int, int, float, float]]:
    """Return ``(frame_id, ped_id, x, y)`` rows, rounded to centimetres."""
    rng = np.random.default_rng(seed)
    w, h = preset.width, preset.height
    pos = np.zeros((0, 2))
    vel = np.zeros((0, 2))
    goal = np.zeros((0, 2))
    speed = np.zeros(0)
    ids = np.zeros(0, dtype=np.int64)
    next_id = 1

    def add(p, g, s, v0):
        nonlocal pos, vel, goal, speed, ids, next_id
        pos = np.vstack([pos, p])
        goal = np.vstack([goal, g])
        speed = np.append(speed, s)
        vel = np.vstack([vel, v0])
        ids = np.append(ids, next_id)
        next_id += 1

    for _ in range(preset.standing_groups):
        centre = rng.uniform([0.2 * w, 0.2 * h], [0.8 * w, 0.8 * h])
        for _ in range(rng.integers(2, 4)):
            p = centre + rng.normal(0, 0.4, 2)
            add(p, p, 0.0, np.zeros(2))

    rows = []
    for frame in range(n_frames):
        for _ in range(rng.poisson(preset.spawn_rate)):
            along_x = rng.random() < preset.horizontal_bias
            flip = rng.random() < 0.5
            if along_x:
                y0, y1 = rng.uniform(0.1 * h, 0.9 * h, 2)
                p, g = np.array([0.0, y0]), np.array([w, y1])
            else:
                x0, x1 = rng.uniform(0.1 * w, 0.9 * w, 2)
                p, g = np.array([x0, 0.0]), np.array([x1, h])
            if flip:
                p, g = g, p
            s = max(0.3, rng.normal(preset.speed_mean, preset.speed_std))
            d = g - p
            add(p, g, s, s * d / np.linalg.norm(d))

        for _ in range(SUBSTEPS):
            to_goal = goal - pos
            dist = np.linalg.norm(to_goal, axis=1, keepdims=True)
            desired = np.where(dist > 1e-9, to_goal / np.maximum(dist, 1e-9), 0.0) * speed[:, None]
            force = (desired - vel) / 0.5
            diff = pos[:, None, :] - pos[None, :, :]
            r = np.linalg.norm(diff, axis=2)
            np.fill_diagonal(r, np.inf)
            push = 2.0 * np.exp((0.6 - r) / 0.3)[:, :, None] * diff / np.maximum(r, 1e-6)[:, :, None]
            force += push.sum(axis=1)
            force += rng.normal(0, 0.3, force.shape)
            moving = speed > 0
            vel[moving] += SIM_DT * force[moving]
            vel[~moving] = 0.0
            vmax = 1.5 * np.maximum(speed, 1e-9)[:, None]
            norm = np.linalg.norm(vel, axis=1, keepdims=True)
            vel = np.where(norm > vmax, vel * vmax / np.maximum(norm, 1e-12), vel)
            pos = pos + SIM_DT * vel

        noisy = pos + rng.normal(0, preset.annotation_noise, pos.shape)
        for i, p in zip(ids, noisy):
            rows.append((frame * FRAME_STEP, int(i), round(float(p[0]), 2), round(float(p[1]), 2)))

        arrived = (speed > 0) & (np.linalg.norm(goal - pos, axis=1) < 0.5)
        outside = (pos[:, 0] < -1) | (pos[:, 0] > w + 1) | (pos[:, 1] < -1) | (pos[:, 1] > h + 1)
        keep = ~(arrived | outside)
        pos, vel, goal, speed, ids = pos[keep], vel[keep], goal[keep], speed[keep], ids[keep]
    return rows


def write_scene(path: Path, rows):
    path.write_text("".join(f"{f}\t{p}\t{x:.2f}\t{y:.2f}\n" for f, p, x, y in rows))


def write_dataset(out_dir, n_frames: int = 600, seed: int = 0,
                  scenes: dict[str, ScenePreset] | None = None) -> Path:
    """Write one file per scene plus ``manifest.txt``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenes = PRESETS if scenes is None else scenes
    lines = []
    for k, (name, preset) in enumerate(sorted(scenes.items())):
        write_scene(out / f"{name}.txt", simulate(preset, n_frames, seed + k))
        lines.append(f"{name} = {name}.txt\n")
    manifest = out / "manifest.txt"
    manifest.write_text("".join(lines))
    return manifest


def main(argv=None):
    ap = argparse.ArgumentParser(description="write synthetic ETH/UCY-format scenes")
    ap.add_argument("out_dir")
    ap.add_argument("--frames", type=int, default=600)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    print(write_dataset(args.out_dir, args.frames, args.seed))


if __name__ == "__main__":
    main()
