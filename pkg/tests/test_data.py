import numpy as np
import pytest

from resgcnn.data import (DatasetFormatError, RawRecord, SequenceSample, build_sequences, load_scenes,
                          loso_split, parse_file, parse_text, read_manifest)


def track(ped, frames, x0=0.0, dx=0.1):
    return [RawRecord(f, ped, x0 + dx * k, 1.0) for k, f in enumerate(frames)]


def test_parse_single_line():
    assert parse_text("840\t1\t8.46\t3.59\n") == [RawRecord(840, 1, 8.46, 3.59)]


def test_parse_float_ids_and_spaces():
    recs = parse_text("10.0 2.0 -1.5 0.25\n\n20.0  2.0  -1.0  0.5\n")
    assert recs == [RawRecord(10, 2, -1.5, 0.25), RawRecord(20, 2, -1.0, 0.5)]
    assert isinstance(recs[0].frame_id, int)


def test_parse_empty():
    assert parse_text("") == []
    assert build_sequences(parse_text("")) == []


def test_parse_arity_error_reports_line():
    with pytest.raises(DatasetFormatError) as exc:
        parse_text("1 1 0 0\n2 1 0.5\n", "scene.txt")
    assert exc.value.lineno == 2
    assert "scene.txt:2" in str(exc.value)


def test_parse_non_numeric():
    with pytest.raises(DatasetFormatError) as exc:
        parse_text("1 1 0 0\n1 1 0 0\n1 a 0 0\n")
    assert exc.value.lineno == 3


def test_parse_file(tmp_path):
    p = tmp_path / "s.txt"
    p.write_text("0 1 1.0 2.0\n")
    assert parse_file(p) == [RawRecord(0, 1, 1.0, 2.0)]


def test_twenty_frames_one_sequence():
    samples = build_sequences(track(1, range(0, 200, 10)))
    assert len(samples) == 1
    s = samples[0]
    assert s.obs.shape == (1, 8, 2) and s.future.shape == (1, 12, 2)
    assert s.start_frame == 0
    np.testing.assert_allclose(s.obs[0, :, 0], 0.1 * np.arange(8))
    np.testing.assert_allclose(s.future[0, :, 0], 0.1 * np.arange(8, 20))


def test_twenty_one_frames_two_sequences():
    samples = build_sequences(track(1, range(0, 210, 10)))
    assert [s.start_frame for s in samples] == [0, 10]


def test_nineteen_frames_nothing():
    assert build_sequences(track(1, range(19))) == []


def test_partial_presence():
    # ped 1 on frames 1..20, ped 2 on frames 5..24
    recs = track(1, range(1, 21)) + track(2, range(5, 25), x0=5.0)
    samples = build_sequences(recs)
    # windows 2..4 hold nobody for all 20 frames
    assert [s.start_frame for s in samples] == [1, 5]
    assert samples[0].ped_ids == [1]
    assert samples[-1].ped_ids == [2]
    for s in samples:
        assert s.n_peds == 1


def test_both_present_sorted_ids():
    recs = track(9, range(20), x0=3.0) + track(4, range(20))
    samples = build_sequences(recs)
    assert len(samples) == 1
    assert samples[0].ped_ids == [4, 9]
    assert samples[0].obs[1, 0, 0] == 3.0


def test_frame_gaps_use_distinct_frames():
    frames = list(range(10)) + list(range(100, 110))
    samples = build_sequences(track(1, frames))
    assert len(samples) == 1
    assert samples[0].frame_ids == frames


def test_sample_invariants():
    with pytest.raises(AssertionError):
        SequenceSample([1, 1], np.zeros((2, 8, 2)), np.zeros((2, 12, 2)), 0)
    with pytest.raises(AssertionError):
        SequenceSample([], np.zeros((0, 8, 2)), np.zeros((0, 12, 2)), 0)
    with pytest.raises(AssertionError):
        SequenceSample([1], np.full((1, 8, 2), np.nan), np.zeros((1, 12, 2)), 0)


def test_build_is_pure():
    recs = track(1, range(25)) + track(2, range(3, 30), x0=2.0)
    a, b = build_sequences(list(recs)), build_sequences(list(reversed(recs)))
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert x.ped_ids == y.ped_ids and x.start_frame == y.start_frame
        assert np.array_equal(x.obs, y.obs) and np.array_equal(x.future, y.future)


def _scenes():
    return {name: build_sequences(track(1, range(20 + k)), scene=name)
            for k, name in enumerate(["eth", "hotel", "univ", "zara1", "zara2"])}


def test_loso_partition():
    scenes = _scenes()
    for held in scenes:
        split = loso_split(scenes, held)
        assert all(s.source_scene == held for s in split.test)
        assert all(s.source_scene != held for s in split.train)
        ids = {id(s) for s in split.train} | {id(s) for s in split.test}
        assert len(ids) == sum(len(v) for v in scenes.values())
        assert len(split.train) + len(split.test) == len(ids)


def test_loso_unknown_scene():
    with pytest.raises(KeyError, match="eth, hotel"):
        loso_split(_scenes(), "atlantis")


def test_manifest_relative_paths(tmp_path):
    (tmp_path / "data").mkdir()
    (tmp_path / "data" / "a.txt").write_text("".join(f"{f} 1 {f * 0.1} 0\n" for f in range(20)))
    (tmp_path / "m.txt").write_text("# scenes\na = data/a.txt\n")
    assert read_manifest(tmp_path / "m.txt") == {"a": (tmp_path / "data" / "a.txt").resolve()}
    scenes = load_scenes(tmp_path / "m.txt")
    assert list(scenes) == ["a"] and len(scenes["a"]) == 1
    assert scenes["a"][0].key == "a@0"


def test_synthetic_dataset_loads(synth_manifest):
    scenes = load_scenes(synth_manifest)
    assert sorted(scenes) == ["eth", "hotel", "univ", "zara1", "zara2"]
    for samples in scenes.values():
        assert samples
        for s in samples[:20]:
            assert s.obs.shape[1:] == (8, 2) and s.future.shape[1:] == (12, 2)
