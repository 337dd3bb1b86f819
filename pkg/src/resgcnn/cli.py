"""``resgcnn`` command line: train, eval, predict and bench.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .config import RunConfig, load_config
from .data import DatasetFormatError, SequenceSample, load_scenes, loso_split
from .evaluate import EvalMode, benchmark_inference, evaluate_baseline, evaluate_split, linear_baseline
from .graph import scene_graph
from .kv import ConfigError
from .model import forward
from .train import (Checkpoint, CheckpointError, TrainingAborted, load_checkpoint, loss_log_text,
                    save_checkpoint, train, write_atomic)

log = logging.getLogger("resgcnn")

CHECKPOINT_NAME = "checkpoint.rgcn"
LOSS_LOG_NAME = "loss.log"


class UsageError(Exception):
    """Bad arguments or configuration (exit 2)."""


class RuntimeFailure(Exception):
    """Failure after validation succeeded (exit 1)."""


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("RESGCNN_THREADS", "1")))
    except ValueError:
        raise UsageError("RESGCNN_THREADS must be an integer") from None


def _config(args) -> RunConfig:
    try:
        return load_config(args.config)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def _split(cfg: RunConfig):
    try:
        scenes = load_scenes(cfg.manifest, cfg.model.t_obs, cfg.model.t_pred)
    except (OSError, DatasetFormatError) as exc:
        raise UsageError(f"cannot load dataset: {exc}") from None
    try:
        return loso_split(scenes, cfg.held_out_scene)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None


def _checkpoint(args, cfg: RunConfig) -> Checkpoint:
    path = Path(args.checkpoint) if args.checkpoint else cfg.output_dir / CHECKPOINT_NAME
    if not path.is_file():
        raise UsageError(f"checkpoint {path} not found")
    try:
        ckpt = load_checkpoint(path)
    except CheckpointError as exc:
        raise RuntimeFailure(f"cannot read checkpoint {path}: {exc}") from None
    if ckpt.model_config != cfg.model:
        diffs = [f"{k}: config {getattr(cfg.model, k)} vs checkpoint {getattr(ckpt.model_config, k)}"
                 for k in cfg.model.__dataclass_fields__
                 if getattr(cfg.model, k) != getattr(ckpt.model_config, k)]
        raise RuntimeFailure("checkpoint does not match config model section: " + "; ".join(diffs))
    return ckpt


def cmd_train(args) -> int:
    cfg = _config(args)
    threads = _threads()
    split = _split(cfg)
    if not split.train:
        raise UsageError(f"no training sequences once {cfg.held_out_scene!r} is held out")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    print(f"training on {len(split.train)} sequences, holding out {split.held_out_scene} "
          f"({len(split.test)} sequences)")
    try:
        ckpt = train(split, cfg.model, cfg.kernel, cfg.train, threads=threads,
                     on_epoch=lambda e, l: print(f"epoch {e}\tloss {l:.6f}", flush=True))
    except TrainingAborted as exc:
        raise RuntimeFailure(str(exc)) from None
    save_checkpoint(ckpt, cfg.output_dir / CHECKPOINT_NAME)
    write_atomic(cfg.output_dir / LOSS_LOG_NAME, loss_log_text(ckpt.losses))
    print(f"wrote {cfg.output_dir / CHECKPOINT_NAME}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    split = _split(cfg)
    if not split.test:
        raise UsageError(f"held-out scene {cfg.held_out_scene!r} has no sequences")
    if args.baseline == "linear":
        mode = "linear"
        metrics = evaluate_baseline(split.test)
    else:
        ckpt = _checkpoint(args, cfg)
        mode = cfg.eval.mode.value
        if cfg.eval.mode is EvalMode.BEST_OF_K:
            mode = f"best_of_{cfg.eval.k}"
        metrics = evaluate_split(ckpt, split.test, cfg.eval)
    report = metrics.report(cfg.held_out_scene, mode)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    write_atomic(cfg.output_dir / f"metrics_{cfg.held_out_scene}_{mode}.txt", report)
    print(report, end="")
    return 0


def _prediction(args, cfg: RunConfig, sample: SequenceSample) -> np.ndarray:
    if args.baseline == "linear":
        return linear_baseline(sample.obs, sample.future.shape[1])
    ckpt = _checkpoint(args, cfg)
    params = ckpt.model_params()
    adj = scene_graph(sample.obs, ckpt.kernel_config, ckpt.model_config.t_pred)
    return forward(sample.obs, adj, params, ckpt.model_config).mean_positions()


def prediction_rows(sample: SequenceSample, pred: np.ndarray) -> list[tuple[int, str, int, float, float]]:
    t_obs = sample.obs.shape[1]
    rows = []
    for i, ped in enumerate(sample.ped_ids):
        rows.extend((ped, "OBS", t, *sample.obs[i, t]) for t in range(t_obs))
        rows.extend((ped, "TRUTH", t_obs + t, *sample.future[i, t]) for t in range(sample.future.shape[1]))
        rows.extend((ped, "PRED", t_obs + t, *pred[i, t]) for t in range(pred.shape[1]))
    return rows


def rows_csv(rows) -> str:
    lines = ["ped_id,frame_kind,t,x,y\n"]
    lines.extend(f"{p},{k},{t},{float(x)!r},{float(y)!r}\n" for p, k, t, x, y in rows)
    return "".join(lines)


def _star(cx, cy, r) -> str:
    pts = []
    for k in range(10):
        rad = r if k % 2 == 0 else r * 0.45
        ang = -np.pi / 2 + k * np.pi / 5
        pts.append(f"{cx + rad * np.cos(ang):.2f},{cy + rad * np.sin(ang):.2f}")
    return " ".join(pts)


def rows_svg(rows, size: int = 600) -> str:
    """Static scatter: circles observed, squares truth, stars predicted."""
    xy = np.array([(x, y) for *_, x, y in rows], dtype=float)
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    span = max(float((hi - lo).max()), 1e-6)
    margin = 30

    def px(x, y):
        # y axis points up in world coordinates
        return (margin + (x - lo[0]) / span * (size - 2 * margin),
                size - margin - (y - lo[1]) / span * (size - 2 * margin))

    peds = sorted({r[0] for r in rows})
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">\n', f'<rect width="{size}" height="{size}" fill="white"/>\n']
    for ped, kind, t, x, y in rows:
        c = palette[peds.index(ped) % len(palette)]
        cx, cy = px(x, y)
        title = f"<title>{escape(f'ped {ped} {kind} t={t}')}</title>"
        if kind == "OBS":
            out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="4" fill="none" stroke="{c}">{title}</circle>\n')
        elif kind == "TRUTH":
            out.append(f'<rect x="{cx - 3.5:.2f}" y="{cy - 3.5:.2f}" width="7" height="7" fill="none" '
                       f'stroke="{c}">{title}</rect>\n')
        else:
            out.append(f'<polygon points="{_star(cx, cy, 6)}" fill="{c}">{title}</polygon>\n')
    out.append("</svg>\n")
    return "".join(out)


def cmd_predict(args) -> int:
    cfg = _config(args)
    split = _split(cfg)
    idx = args.sequence
    if not 0 <= idx < len(split.test):
        raise UsageError(f"sequence index {idx} out of range (held-out scene has {len(split.test)})")
    sample = split.test[idx]
    pred = _prediction(args, cfg, sample)
    rows = prediction_rows(sample, pred)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    stem = cfg.output_dir / f"predict_{cfg.held_out_scene}_{idx}"
    write_atomic(stem.with_suffix(".csv"), rows_csv(rows))
    print(f"wrote {stem.with_suffix('.csv')} ({len(rows)} rows)")
    if args.svg:
        write_atomic(stem.with_suffix(".svg"), rows_svg(rows))
        print(f"wrote {stem.with_suffix('.svg')}")
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args)
    ckpt = _checkpoint(args, cfg)
    if args.repeats < 10:
        raise UsageError("--repeats must be at least 10")
    if args.scene_size < 1:
        raise UsageError("--scene-size must be at least 1")
    result = benchmark_inference(ckpt, args.scene_size, args.repeats)
    print(result.lines(), end="")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "predict": cmd_predict, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="resgcnn", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="run configuration file")
    ap.add_argument("--checkpoint", help="checkpoint path (default: OUTPUT_DIR/checkpoint.rgcn)")
    ap.add_argument("--baseline", choices=["linear"], help="use the constant-velocity baseline")
    ap.add_argument("--sequence", type=int, default=0, help="test sequence index for predict")
    ap.add_argument("--svg", action="store_true", help="predict: also write an SVG scatter")
    ap.add_argument("--repeats", type=int, default=100, help="bench: timed forward passes")
    ap.add_argument("--scene-size", type=int, default=10, help="bench: pedestrians in the scene")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"resgcnn: error: {exc}", file=sys.stderr)
        return 2
    except RuntimeFailure as exc:
        print(f"resgcnn: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
