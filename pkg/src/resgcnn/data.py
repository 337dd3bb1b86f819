"""ETH/UCY-style annotation files and fixed-length scene windows.

Each annotation file holds one scene, one observation per line::

    frame_id  ped_id  x  y

separated by tabs or spaces, coordinates in meters.  A manifest maps scene
names to such files with ``name = relative/path.txt`` lines.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np

from .kv import parse_lines

T_OBS = 8
T_PRED = 12


class DatasetFormatError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class RawRecord(NamedTuple):
    frame_id: int
    ped_id: int
    x: float
    y: float


@dataclass(eq=False)
class SequenceSample:
    ped_ids: list[int]
    obs: np.ndarray      # [N, T_obs, 2]
    future: np.ndarray   # [N, T_pred, 2]
    start_frame: int
    source_scene: str = ""
    frame_ids: list[int] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.ped_ids)
        assert n >= 1, "a sample needs at least one pedestrian"
        assert len(set(self.ped_ids)) == n, "duplicate pedestrian ids"
        assert self.obs.ndim == 3 and self.obs.shape[0] == n and self.obs.shape[2] == 2
        assert self.future.ndim == 3 and self.future.shape[0] == n and self.future.shape[2] == 2
        assert np.all(np.isfinite(self.obs)) and np.all(np.isfinite(self.future))

    @property
    def n_peds(self) -> int:
        return len(self.ped_ids)

    @property
    def key(self) -> str:
        return f"{self.source_scene}@{self.start_frame}"

    def positions(self) -> np.ndarray:
        return np.concatenate([self.obs, self.future], axis=1)


@dataclass
class DatasetSplit:
    train: list[SequenceSample]
    test: list[SequenceSample]
    held_out_scene: str


def parse_text(text: str, source: str = "<text>") -> list[RawRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 4:
            raise DatasetFormatError(source, lineno, f"expected 4 fields, got {len(fields)}")
        try:
            frame, ped, x, y = (float(f) for f in fields)
        except ValueError:
            raise DatasetFormatError(source, lineno, f"non-numeric field in {line.strip()!r}") from None
        if not all(np.isfinite((frame, ped, x, y))):
            raise DatasetFormatError(source, lineno, "non-finite value")
        records.append(RawRecord(int(frame), int(ped), x, y))
    return records


def parse_file(path: str | os.PathLike) -> list[RawRecord]:
    return parse_text(Path(path).read_text(), str(path))


def build_sequences(records: list[RawRecord], t_obs: int = T_OBS, t_pred: int = T_PRED,
                    scene: str = "") -> list[SequenceSample]:
    """Slide a window of ``t_obs + t_pred`` consecutive distinct frames, stride 1.

    Only pedestrians present in every frame of a window are kept; windows
    with nobody fully present are dropped.
    """
    length = t_obs + t_pred
    by_frame: dict[int, dict[int, tuple[float, float]]] = {}
    for r in records:
        by_frame.setdefault(r.frame_id, {})[r.ped_id] = (r.x, r.y)
    frames = sorted(by_frame)
    samples = []
    for s in range(len(frames) - length + 1):
        window = frames[s:s + length]
        present = set(by_frame[window[0]])
        for f in window[1:]:
            present.intersection_update(by_frame[f])
            if not present:
                break
        if not present:
            continue
        peds = sorted(present)
        pos = np.array([[by_frame[f][p] for f in window] for p in peds], dtype=np.float64)
        samples.append(SequenceSample(peds, pos[:, :t_obs].copy(), pos[:, t_obs:].copy(),
                                      window[0], scene, list(window)))
    return samples


def loso_split(scenes: Mapping[str, list[SequenceSample]], held_out: str) -> DatasetSplit:
    """Hold out one scene for testing and train on the rest (sorted by name)."""
    if held_out not in scenes:
        raise KeyError(f"unknown scene {held_out!r}; available: {', '.join(sorted(scenes))}")
    train = [s for name in sorted(scenes) if name != held_out for s in scenes[name]]
    return DatasetSplit(train, list(scenes[held_out]), held_out)


def read_manifest(path: str | os.PathLike) -> dict[str, Path]:
    """Scene name -> annotation file; relative paths resolve against the manifest's directory."""
    path = Path(path)
    items = parse_lines(path.read_text(), str(path))
    return {name: (path.parent / rel).resolve() for name, rel in items.items()}


def load_scenes(manifest: str | os.PathLike, t_obs: int = T_OBS,
                t_pred: int = T_PRED) -> dict[str, list[SequenceSample]]:
    return {name: build_sequences(parse_file(p), t_obs, t_pred, name)
            for name, p in read_manifest(manifest).items()}
