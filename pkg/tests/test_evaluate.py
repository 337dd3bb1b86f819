import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import ade_loops, fde_loops
from resgcnn import evaluate
from resgcnn.data import SequenceSample
from resgcnn.evaluate import (EvalConfig, EvalMode, Metrics, ade, benchmark_inference, evaluate_baseline,
                              evaluate_predictor, evaluate_split, fde, linear_baseline, sample_trajectories)
from resgcnn.graph import KernelConfig, scene_graph
from resgcnn.model import GaussianPrediction, ModelConfig, forward, init_params
from resgcnn.tensor import Tensor
from resgcnn.train import Checkpoint, checkpoint_bytes

MCFG, KCFG = ModelConfig(), KernelConfig()


def gaussian(mu, lsx, lsy, r, origin=None):
    n, t, _ = mu.shape
    raw = np.empty((5, t, n))
    raw[0:2] = mu.transpose(2, 1, 0)
    raw[2], raw[3], raw[4] = lsx, lsy, r
    return GaussianPrediction(Tensor(raw), origin)


def stationary_sample(rng, n, key=0):
    where = rng.uniform(0, 10, size=(n, 1, 2))
    return SequenceSample(list(range(n)), np.repeat(where, 8, axis=1), np.repeat(where, 12, axis=1), key, "fix")


def zero_checkpoint():
    params = init_params(MCFG, 0)
    params.zero_()
    return Checkpoint.from_params(params, MCFG, KCFG)


# -- metrics ----------------------------------------------------------------

def test_metrics_exact_match(rng):
    x = rng.normal(size=(3, 12, 2))
    assert ade(x, x) == 0.0 and fde(x, x) == 0.0


def test_metrics_three_four_five(rng):
    truth = rng.normal(size=(4, 12, 2))
    pred = truth + np.array([0.3, 0.4])
    assert ade(pred, truth) == pytest.approx(0.5, abs=1e-12)
    assert fde(pred, truth) == pytest.approx(0.5, abs=1e-12)


def test_metrics_final_offset_only():
    truth = np.zeros((1, 12, 2))
    pred = truth.copy()
    pred[0, -1] = (0.0, 1.0)
    assert fde(pred, truth) == 1.0
    assert ade(pred, truth) == pytest.approx(1 / 12, abs=1e-15)


def test_fde_ignores_earlier_frames(rng):
    truth = rng.normal(size=(3, 12, 2))
    pred = truth + rng.normal(size=truth.shape)
    other = pred.copy()
    other[:, :-1] += 5.0
    assert fde(pred, truth) == fde(other, truth)


def test_metrics_shape_mismatch():
    with pytest.raises(ValueError):
        ade(np.zeros((2, 12, 2)), np.zeros((3, 12, 2)))
    with pytest.raises(ValueError):
        fde(np.zeros((2, 12, 2)), np.zeros((2, 11, 2)))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_metrics_match_loop_oracles_bitwise(n, seed):
    rng = np.random.default_rng(seed)
    pred, truth = rng.normal(0, 3, size=(2, n, 12, 2))
    assert ade(pred, truth) == ade_loops(pred, truth)
    assert fde(pred, truth) == fde_loops(pred, truth)
    assert ade(pred, truth) >= 0 and fde(pred, truth) >= 0


def test_metrics_relabel_invariant(rng):
    pred, truth = rng.normal(size=(2, 5, 12, 2))
    perm = rng.permutation(5)
    assert ade(pred[perm], truth[perm]) == pytest.approx(ade(pred, truth), rel=1e-14)
    assert fde(pred[perm], truth[perm]) == pytest.approx(fde(pred, truth), rel=1e-14)


def test_metrics_output_lines():
    m = Metrics(0.5, 1.25, 3, 7)
    assert m.line("zara1", "mean") == "zara1\tmean\t0.500000\t1.250000"
    report = m.report("zara1", "mean")
    assert "ADE: 0.500 m" in report and report.endswith(m.line("zara1", "mean") + "\n")


# -- baseline ---------------------------------------------------------------

def test_baseline_stationary():
    obs = np.full((2, 8, 2), 4.0)
    assert np.array_equal(linear_baseline(obs), np.full((2, 12, 2), 4.0))


def test_baseline_progression():
    obs = np.zeros((1, 8, 2))
    obs[0, :, 0] = np.arange(-6, 2)
    want = np.stack([np.arange(2, 14), np.zeros(12)], axis=-1)
    assert np.array_equal(linear_baseline(obs)[0], want)


def test_baseline_translation_equivariant(rng):
    obs = rng.normal(size=(3, 8, 2))
    shift = np.array([2.5, -1.0])
    np.testing.assert_allclose(linear_baseline(obs + shift), linear_baseline(obs) + shift, atol=1e-12)


def test_evaluate_baseline(rng):
    test = [stationary_sample(rng, 3)]
    m = evaluate_baseline(test)
    assert m.ade == 0.0 and m.fde == 0.0 and m.n_pedestrians == 3


# -- sampling ---------------------------------------------------------------

def test_sampling_tiny_sigma(rng):
    mu = rng.normal(size=(2, 12, 2))
    samples = sample_trajectories(gaussian(mu, -20.0, -20.0, 0.3), 5, 0)
    assert samples.shape == (5, 2, 12, 2)
    np.testing.assert_allclose(samples, np.broadcast_to(mu, samples.shape), atol=1e-7)


def test_sampling_uncorrelated():
    pred = gaussian(np.zeros((1, 1, 2)), 0.0, 0.5, 0.0)
    s = sample_trajectories(pred, 10_000, 3)[:, 0, 0]
    assert abs(np.corrcoef(s[:, 0], s[:, 1])[0, 1]) < 0.05


def test_sampling_correlation_follows_rho():
    pred = gaussian(np.zeros((1, 1, 2)), 0.0, 0.0, np.arctanh(0.8))
    s = sample_trajectories(pred, 10_000, 3)[:, 0, 0]
    assert np.corrcoef(s[:, 0], s[:, 1])[0, 1] == pytest.approx(0.8, abs=0.03)
    assert np.std(s[:, 0]) == pytest.approx(1.0, abs=0.03)


def test_sampling_deterministic_and_prefix(rng):
    pred = gaussian(rng.normal(size=(3, 12, 2)), -1.0, -0.5, 0.2, origin=rng.normal(size=(3, 2)))
    a = sample_trajectories(pred, 7, 42)
    assert np.array_equal(a, sample_trajectories(pred, 7, 42))
    assert np.array_equal(sample_trajectories(pred, 3, 42), a[:3])
    assert not np.array_equal(a, sample_trajectories(pred, 7, 43))


def test_sampling_rejects_zero_k():
    with pytest.raises(ValueError):
        sample_trajectories(gaussian(np.zeros((1, 12, 2)), 0, 0, 0), 0)
    with pytest.raises(ValueError):
        EvalConfig(EvalMode.BEST_OF_K, k=0)


# -- evaluate_split ---------------------------------------------------------

def test_perfect_predictor_scores_zero(rng):
    test = [stationary_sample(rng, n, i) for i, n in enumerate((1, 3, 4))]
    for cfg in (EvalConfig(), EvalConfig(EvalMode.BEST_OF_K, k=3)):
        m = evaluate_split(zero_checkpoint(), test, cfg)
        if cfg.mode is EvalMode.MEAN:
            assert m.ade == 0.0 and m.fde == 0.0
        assert m.n_sequences == 3 and m.n_pedestrians == 8


def _trained_like_checkpoint(seed=4):
    return Checkpoint.from_params(init_params(MCFG, seed), MCFG, KCFG)


def _walkers(rng, count):
    out = []
    for i in range(count):
        n = int(rng.integers(1, 5))
        pos = rng.uniform(0, 8, (n, 1, 2)) + np.arange(20)[None, :, None] * rng.normal(0, 0.4, (n, 1, 2))
        out.append(SequenceSample(list(range(n)), pos[:, :8], pos[:, 8:], i, "walk"))
    return out


def test_best_of_k_non_increasing(rng):
    ckpt, test = _trained_like_checkpoint(), _walkers(rng, 6)
    ades = [evaluate_split(ckpt, test, EvalConfig(EvalMode.BEST_OF_K, k=k, seed=9)).ade for k in (1, 2, 5, 20)]
    assert all(b <= a for a, b in zip(ades, ades[1:]))


def test_best_of_one_is_a_single_sample(rng):
    ckpt, test = _trained_like_checkpoint(), _walkers(rng, 3)
    m = evaluate_split(ckpt, test, EvalConfig(EvalMode.BEST_OF_K, k=1, seed=5))
    params = ckpt.model_params()
    per = []
    for idx, s in enumerate(test):
        pred = forward(s.obs, scene_graph(s.obs, KCFG), params, MCFG)
        x = sample_trajectories(pred, 1, np.random.default_rng([5, idx]))[0]
        per.append((ade(x, s.future), s.n_peds))
    assert m.ade == pytest.approx(sum(a * n for a, n in per) / sum(n for _, n in per), rel=1e-14)


def test_best_of_k_tiny_sigma_matches_mean(rng, monkeypatch):
    real = evaluate.forward

    def collapsed(*args):
        pred = real(*args)
        pred.raw.data[2:4] = -30.0
        return pred

    ckpt, test = _trained_like_checkpoint(), _walkers(rng, 4)
    monkeypatch.setattr(evaluate, "forward", collapsed)
    mean = evaluate_split(ckpt, test, EvalConfig())
    sampled = evaluate_split(ckpt, test, EvalConfig(EvalMode.BEST_OF_K, k=3))
    assert mean.ade > 0
    assert sampled.ade == pytest.approx(mean.ade, abs=1e-9)
    assert sampled.fde == pytest.approx(mean.fde, abs=1e-9)


def test_pedestrian_weighted_aggregate(rng):
    a, b = stationary_sample(rng, 1, 0), stationary_sample(rng, 3, 1)
    offsets = {0: 1.0, 1: 0.0}
    m = evaluate_predictor([a, b], lambda s: s.future + offsets[s.start_frame])
    assert m.ade == pytest.approx(np.sqrt(2) * 1 / 4, rel=1e-14)


def test_empty_test_set():
    with pytest.raises(ValueError, match="empty"):
        evaluate_split(zero_checkpoint(), [], EvalConfig())
    with pytest.raises(ValueError, match="empty"):
        evaluate_baseline([])


def test_evaluation_does_not_mutate_checkpoint(rng):
    ckpt = _trained_like_checkpoint()
    before = checkpoint_bytes(ckpt)
    evaluate_split(ckpt, _walkers(rng, 3), EvalConfig(EvalMode.BEST_OF_K, k=4))
    assert checkpoint_bytes(ckpt) == before


# -- benchmark --------------------------------------------------------------

def test_benchmark(rng):
    res = benchmark_inference(_trained_like_checkpoint(), scene_size=4, repeats=10, warmup=1)
    assert res.mean_forward_s > 0 and res.mean_graph_s > 0
    assert res.params == 1935 and res.repeats == 10 and res.scene_size == 4
    assert "params=1935\n" in res.lines()
    with pytest.raises(ValueError):
        benchmark_inference(_trained_like_checkpoint(), repeats=5)
