"""Residual graph-convolutional pedestrian trajectory forecasting on numpy."""
from .data import DatasetSplit, RawRecord, SequenceSample, build_sequences, load_scenes, loso_split, parse_file
from .evaluate import EvalConfig, EvalMode, Metrics, ade, evaluate_split, fde, linear_baseline
from .graph import KernelConfig, build_adjacency, normalize_adjacency, scene_graph
from .model import GaussianPrediction, ModelConfig, ModelParams, forward, init_params, param_count
from .train import Checkpoint, TrainConfig, gaussian_nll, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"
