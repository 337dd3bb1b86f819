"""Run configuration: ``key = value`` lines with dotted section prefixes.

Example::

    dataset_dir = data/ethucy
    manifest = manifest.txt          # relative to dataset_dir
    held_out_scene = zara2
    output_dir = runs/zara2
    train.epochs = 200
    kernel.omega_dir = 2.0
    eval.mode = best_of_k
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from . import kv
from .evaluate import EvalConfig
from .graph import KernelConfig
from .kv import ConfigError
from .model import ModelConfig
from .train import TrainConfig

SECTIONS = {"model": ModelConfig, "kernel": KernelConfig, "train": TrainConfig, "eval": EvalConfig}
TOP_LEVEL = ("dataset_dir", "manifest", "held_out_scene", "output_dir")


@dataclass
class RunConfig:
    dataset_dir: Path
    manifest: Path
    held_out_scene: str
    output_dir: Path
    model: ModelConfig = field(default_factory=ModelConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def dump(self) -> str:
        out = [f"{k} = {getattr(self, k)}\n" for k in TOP_LEVEL]
        for name in SECTIONS:
            out.append(kv.dump(getattr(self, name), f"{name}."))
        return "".join(out)


def parse_config(text: str, base_dir: str | os.PathLike = ".", source: str = "<config>") -> RunConfig:
    """Parse and validate; every referenced input path must exist."""
    items = kv.parse_lines(text, source)
    sections: dict[str, dict[str, str]] = {name: {} for name in SECTIONS}
    top: dict[str, str] = {}
    for key, value in items.items():
        if "." in key:
            section, sub = key.split(".", 1)
            if section not in SECTIONS:
                raise ConfigError(f"{source}: unknown section {section!r} in key {key!r}")
            sections[section][sub] = value
        elif key in TOP_LEVEL:
            top[key] = value
        else:
            raise ConfigError(f"{source}: unknown key {key!r}")
    missing = [k for k in TOP_LEVEL if k not in top]
    if missing:
        raise ConfigError(f"{source}: missing required keys: {', '.join(missing)}")

    base = Path(base_dir)
    dataset_dir = base / top["dataset_dir"]
    if not dataset_dir.is_dir():
        raise ConfigError(f"dataset_dir {dataset_dir} does not exist")
    manifest = dataset_dir / top["manifest"]
    if not manifest.is_file():
        raise ConfigError(f"manifest {manifest} does not exist")
    built = {name: kv.build(cls, sections[name], f"{name}.") for name, cls in SECTIONS.items()}
    return RunConfig(dataset_dir, manifest, top["held_out_scene"], base / top["output_dir"], **built)


def load_config(path: str | os.PathLike) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.parent, str(path))
