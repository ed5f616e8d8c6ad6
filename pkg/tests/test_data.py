import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmtml.data import (
    EmbeddingTable,
    MomentAnnotation,
    RawVideoFeatures,
    SyntheticSpec,
    generate_synthetic_dataset,
    interpolate_to_fixed_length,
    load_annotations,
    load_embeddings,
    load_feature_file,
    project_annotation,
    synthetic_embedding_table,
    tokenize,
    write_annotations,
    write_embeddings,
    write_feature_file,
    write_synthetic_dataset,
)
from cmtml.errors import AnnotationError, DataFormatError, InputError

from oracles import interpolate_scalar


def raw(features, duration=10.0, video_id="vid"):
    return RawVideoFeatures(video_id=video_id, features=np.asarray(features, dtype=np.float64),
                            duration_seconds=duration)


class TestInterpolation:
    def test_identity_when_lengths_match(self):
        feats = np.random.randn(5, 8)
        out = interpolate_to_fixed_length(raw(feats), 8)
        np.testing.assert_array_equal(out, feats)

    def test_two_columns_to_three_gives_midpoint(self):
        v0, v1 = np.array([1.0, -2.0]), np.array([3.0, 4.0])
        out = interpolate_to_fixed_length(raw(np.stack([v0, v1], axis=1)), 3)
        np.testing.assert_allclose(out[:, 0], v0)
        np.testing.assert_allclose(out[:, 1], (v0 + v1) / 2)
        np.testing.assert_allclose(out[:, 2], v1)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(11)
        feats = rng.normal(size=(7, 100))
        out = interpolate_to_fixed_length(raw(feats), 64)
        expected = interpolate_scalar([list(feats[:, t]) for t in range(100)], 64)
        np.testing.assert_allclose(out, np.array(expected).T, atol=1e-12)

    def test_constant_sequences_are_exact(self):
        for l in (2, 5, 33):
            feats = np.full((3, 9), 2.5)
            out = interpolate_to_fixed_length(raw(feats), l)
            np.testing.assert_array_equal(out, np.full((3, l), 2.5))

    def test_single_clip_repeats(self):
        out = interpolate_to_fixed_length(raw(np.array([[1.0], [2.0]])), 4)
        np.testing.assert_array_equal(out, [[1, 1, 1, 1], [2, 2, 2, 2]])

    def test_empty_features_rejected(self):
        with pytest.raises(InputError):
            RawVideoFeatures("x", np.zeros((3, 0)), 5.0)


class TestProjectAnnotation:
    def test_full_video(self):
        assert project_annotation(0.0, 120.0, 120.0, 64) == (0, 63)

    def test_hand_arithmetic(self):
        assert project_annotation(30.0, 60.0, 120.0, 64) == (16, 31)

    def test_clamping_at_final_clip(self):
        assert project_annotation(119.9, 120.0, 120.0, 64) == (63, 63)

    def test_errors(self):
        with pytest.raises(AnnotationError):
            project_annotation(5.0, 4.0, 10.0, 8)
        with pytest.raises(AnnotationError):
            project_annotation(0.0, 1.0, 0.0, 8)

    @given(
        start=st.floats(0.0, 100.0),
        delta=st.floats(0.0, 20.0),
        bump=st.floats(0.0, 5.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_start_monotone(self, start, delta, bump):
        duration = 130.0
        a, _ = project_annotation(start, start + delta, duration, 64)
        b, _ = project_annotation(start + bump, start + bump + delta, duration, 64)
        assert b >= a

    def test_round_trip_with_grid_aligned_times(self):
        l, duration = 32, 32.0
        for s, e in [(0, 0), (3, 7), (31, 31), (0, 31)]:
            t0, t1 = s * duration / l, (e + 1) * duration / l
            assert project_annotation(t0, t1, duration, l) == (s, e)


class TestFeatureFiles:
    def test_round_trip_bit_identical(self, tmp_path):
        feats = np.random.randn(6, 13).astype(np.float32)
        path = tmp_path / "v.fv"
        write_feature_file(path, feats, 33.5)
        loaded = load_feature_file(path)
        np.testing.assert_array_equal(loaded.features, feats)
        assert loaded.duration_seconds == 33.5
        assert loaded.video_id == "v"

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.fv"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 24)
        with pytest.raises(DataFormatError, match="magic"):
            load_feature_file(path)

    def test_truncated_body(self, tmp_path):
        path = tmp_path / "v.fv"
        write_feature_file(path, np.ones((2, 3), dtype=np.float32), 5.0)
        good = path.read_bytes()
        path.write_bytes(good[:-4])
        with pytest.raises(DataFormatError, match="byte"):
            load_feature_file(path)

    def test_clip_major_layout(self, tmp_path):
        # first clip's feature block must come first in the body
        feats = np.array([[1.0, 3.0], [2.0, 4.0]], dtype=np.float32)
        path = tmp_path / "v.fv"
        write_feature_file(path, feats, 1.0)
        body = path.read_bytes()[24:]
        np.testing.assert_array_equal(np.frombuffer(body, "<f4"), [1, 2, 3, 4])


class TestAnnotations:
    def test_round_trip(self, tmp_path):
        anns = [
            MomentAnnotation.from_times("a", "the dog runs", 1.0, 4.0, 10.0, 8),
            MomentAnnotation.from_times("b", "a person waves", 0.0, 10.0, 10.0, 8),
        ]
        path = tmp_path / "ann.json"
        write_annotations(path, anns)
        loaded = load_annotations(path, l=8)
        assert loaded == anns

    def test_reversed_interval_rejected(self, tmp_path):
        path = tmp_path / "ann.json"
        path.write_text(json.dumps([
            {"video_id": "a", "query": "x", "t_start": 5.0, "t_end": 2.0, "duration": 10.0}
        ]))
        with pytest.raises(AnnotationError, match="entry 0"):
            load_annotations(path, l=8)

    def test_missing_key_reports_entry(self, tmp_path):
        path = tmp_path / "ann.json"
        path.write_text(json.dumps([{"video_id": "a", "query": "x"}]))
        with pytest.raises(DataFormatError, match="entry 0"):
            load_annotations(path, l=8)

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "ann.json"
        path.write_text("[\n{,}\n]")
        with pytest.raises(DataFormatError, match="line"):
            load_annotations(path)


class TestEmbeddings:
    def make_line(self, word, values):
        return word + " " + " ".join(str(v) for v in values)

    def test_round_trip(self, tmp_path):
        table = EmbeddingTable({"cat": 0, "dog": 1}, np.random.randn(2, 300).astype(np.float32))
        path = tmp_path / "emb.txt"
        write_embeddings(path, table)
        loaded = load_embeddings(path)
        assert loaded.vocabulary == table.vocabulary
        np.testing.assert_array_equal(loaded.vectors, table.vectors)

    def test_duplicate_word_last_wins_with_warning(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text(
            self.make_line("cat", [1.0] * 300) + "\n" + self.make_line("cat", [2.0] * 300) + "\n"
        )
        with pytest.warns(UserWarning, match="duplicate word 'cat'"):
            table = load_embeddings(path)
        np.testing.assert_array_equal(table.lookup(["cat"])[:, 0], np.full(300, 2.0))

    def test_wrong_field_count_reports_line(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text(self.make_line("ok", [0.0] * 300) + "\ncat 1.0 2.0\n")
        with pytest.raises(DataFormatError, match="line 2"):
            load_embeddings(path)

    def test_oov_lookup_is_zero(self):
        table = EmbeddingTable({"cat": 0}, np.ones((1, 300), dtype=np.float32))
        out = table.lookup(["cat", "unknown"])
        np.testing.assert_array_equal(out[:, 1], np.zeros(300))
        np.testing.assert_array_equal(out[:, 0], np.ones(300))


class TestSynthetic:
    def test_zero_noise_plants_exact_pattern(self):
        spec = SyntheticSpec(n_samples=4, l=16, d=6, noise_std=0.0, seed=5)
        for sample in generate_synthetic_dataset(spec):
            ann = sample.annotation
            inside = sample.features[:, ann.start_idx]
            # all inside columns identical, all outside columns zero
            for t in range(16):
                if ann.start_idx <= t <= ann.end_idx:
                    np.testing.assert_array_equal(sample.features[:, t], inside)
                else:
                    np.testing.assert_array_equal(sample.features[:, t], np.zeros(6))
            assert np.linalg.norm(inside) > 0

    def test_same_seed_bit_identical(self):
        spec = SyntheticSpec(n_samples=6, l=12, d=4, noise_std=0.3, seed=9)
        first = generate_synthetic_dataset(spec)
        second = generate_synthetic_dataset(spec)
        assert len(first) == len(second)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.features, b.features)
            assert a.tokens == b.tokens
            assert a.annotation == b.annotation

    def test_pattern_depends_only_on_tokens(self):
        spec = SyntheticSpec(n_samples=40, l=16, d=6, noise_std=0.0, seed=2)
        samples = generate_synthetic_dataset(spec)
        by_tokens = {}
        for s in samples:
            pattern = s.features[:, s.annotation.start_idx]
            if s.tokens in by_tokens:
                np.testing.assert_array_equal(by_tokens[s.tokens], pattern)
            by_tokens[s.tokens] = pattern

    def test_annotations_satisfy_invariants(self):
        spec = SyntheticSpec(n_samples=50, l=32, d=4, noise_std=0.1, seed=1)
        for s in generate_synthetic_dataset(spec):
            ann = s.annotation
            assert 0 <= ann.t_start <= ann.t_end <= ann.duration
            assert project_annotation(ann.t_start, ann.t_end, ann.duration, 32) == (ann.start_idx, ann.end_idx)

    def test_written_dataset_round_trips(self, tmp_path):
        spec = SyntheticSpec(n_samples=3, l=8, d=4, noise_std=0.1, seed=7)
        write_synthetic_dataset(spec, tmp_path)
        samples = generate_synthetic_dataset(spec)
        anns = load_annotations(tmp_path / "annotations.json", l=8)
        assert anns == [s.annotation for s in samples]
        table = load_embeddings(tmp_path / "embeddings.txt")
        expected = synthetic_embedding_table(spec)
        np.testing.assert_array_equal(table.vectors, expected.vectors)
        for s in samples:
            loaded = load_feature_file(tmp_path / "features" / f"{s.annotation.video_id}.fv")
            np.testing.assert_array_equal(loaded.features, s.features)


def test_tokenize_lowercases_and_splits():
    assert tokenize("The Dog   Runs\tfast") == ("the", "dog", "runs", "fast")
    assert tokenize("") == ()
