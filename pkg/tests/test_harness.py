import json

import numpy as np
import pytest
import torch

from cmtml import harness
from cmtml.checkpoint import load_checkpoint, restore_estimator, save_checkpoint
from cmtml.cli import main
from cmtml.config import RunConfig
from cmtml.data import (
    SyntheticSpec,
    generate_synthetic_dataset,
    load_feature_file,
    synthetic_embedding_table,
    write_synthetic_dataset,
)
from cmtml.errors import ConfigurationError, DataFormatError
from cmtml.estimator import TemporalMomentLocalizer

SPEC = dict(n_samples=12, l=8, d=6, noise_std=0.1, seed=21)

CONFIG_TEMPLATE = {
    "model": {
        "l": 8, "d": 6, "p": 4, "k": 3, "dropout": 0.0,
        "global_stack": [[1, 1, 4], [3, 1, 1]],
        "head_stack": [[3, 1, 4], [3, 1, 3]],
        "local_stack": [[3, 1, 4], [3, 1, 1]],
    },
    "loss": {"lambda_local": 2.0, "lambda_m": 2.0, "soft_label_sigma": 1.0, "epsilon": 1e-8},
    "attention_mode": "TA",
    "eval_mode": "GL",
    "fusion": "CM_LSTM",
    "optimizer": {"learning_rate": 0.001, "batch_size": 8, "epochs": 2, "seed": 0},
}


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    write_synthetic_dataset(SyntheticSpec(**SPEC), out)
    return out


@pytest.fixture(scope="module")
def run_config(synth_dir, tmp_path_factory):
    ckpt_dir = tmp_path_factory.mktemp("ckpts")
    data = dict(CONFIG_TEMPLATE)
    data["paths"] = {
        "features": str(synth_dir / "features"),
        "annotations": str(synth_dir / "annotations.json"),
        "embeddings": str(synth_dir / "embeddings.txt"),
        "checkpoints": str(ckpt_dir),
    }
    return RunConfig.from_dict(data)


@pytest.fixture(scope="module")
def trained_checkpoint(run_config):
    return harness.train(run_config)


class TestRunConfig:
    def test_json_round_trip(self, run_config, tmp_path):
        path = tmp_path / "config.json"
        run_config.to_json(path)
        loaded = RunConfig.from_json(path)
        assert loaded == run_config

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown"):
            RunConfig.from_dict({"modle": {}})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigurationError, match="optimizer"):
            RunConfig.from_dict({"optimizer": {"lr": 0.1}})

    def test_invalid_enum_rejected(self):
        with pytest.raises(ConfigurationError):
            RunConfig.from_dict({"attention_mode": "BOTH"})

    def test_defaults_follow_published_settings(self):
        config = RunConfig()
        assert config.model.l == 64
        assert config.model.p == 256
        assert config.model.k == 32
        assert config.model.dropout == 0.5
        assert config.loss.lambda_local == 2.0
        assert config.loss.lambda_m == 2.0
        assert config.optimizer.learning_rate == 0.001
        assert config.optimizer.batch_size == 32
        assert len(config.model.global_stack) == 2
        assert len(config.model.head_stack) == 2
        assert len(config.model.local_stack) == 4


class TestSynthVerb:
    def test_synth_cli_writes_dataset(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(SPEC))
        out = tmp_path / "data"
        assert main(["synth", "--spec", str(spec_path), "--out", str(out)]) == 0
        assert (out / "annotations.json").exists()
        assert (out / "embeddings.txt").exists()
        feature_files = sorted((out / "features").glob("*.fv"))
        assert len(feature_files) == SPEC["n_samples"]
        loaded = load_feature_file(feature_files[0])
        assert loaded.features.shape == (SPEC["d"], SPEC["l"])

    def test_synth_rejects_bad_spec(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps({"n_samples": 2, "bogus": 1}))
        assert main(["synth", "--spec", str(spec_path), "--out", str(tmp_path / "x")]) == 1


class TestTrainVerb:
    def test_train_writes_checkpoints(self, trained_checkpoint, run_config):
        assert trained_checkpoint.exists()
        assert (trained_checkpoint.parent / harness.LAST_CHECKPOINT).exists()
        ckpt = load_checkpoint(trained_checkpoint)
        assert ckpt.epoch == run_config.optimizer.epochs - 1
        assert ckpt.run_config["attention_mode"] == "TA"
        assert any(name.startswith("network.") for name in ckpt.arrays)

    def test_train_cli_with_config_file(self, run_config, tmp_path, capsys):
        config = RunConfig.from_dict({**run_config.to_dict(),
                                      "paths": {**run_config.to_dict()["paths"],
                                                "checkpoints": str(tmp_path / "ck")}})
        path = tmp_path / "config.json"
        config.to_json(path)
        assert main(["train", "--config", str(path)]) == 0
        out = capsys.readouterr().out
        assert "checkpoint written" in out

    def test_missing_paths_rejected(self, run_config):
        broken = RunConfig.from_dict({**run_config.to_dict(), "paths": {}})
        with pytest.raises(ConfigurationError, match="paths"):
            harness.train(broken)


class TestCheckpointRoundTrip:
    def test_forward_outputs_bit_identical(self, trained_checkpoint, synth_dir):
        ckpt = load_checkpoint(trained_checkpoint)
        estimator = restore_estimator(ckpt)
        samples = generate_synthetic_dataset(SyntheticSpec(**SPEC))
        sample = samples[0]
        pred_a, map_a = estimator.localize(
            sample.features, sample.annotation.duration, sample.tokens, return_map=True
        )
        again = restore_estimator(load_checkpoint(trained_checkpoint))
        pred_b, map_b = again.localize(
            sample.features, sample.annotation.duration, sample.tokens, return_map=True
        )
        assert pred_a == pred_b
        np.testing.assert_array_equal(map_a, map_b)

    def test_save_load_preserves_live_estimator_outputs(self, tmp_path):
        samples = generate_synthetic_dataset(SyntheticSpec(**SPEC))
        table = synthetic_embedding_table(SyntheticSpec(**SPEC))
        est = TemporalMomentLocalizer(
            l=8, d=6, p=4, k=3, dropout=0.0, batch_size=8, epochs=2, seed=3,
            global_stack=((1, 1, 4), (3, 1, 1)), head_stack=((3, 1, 4), (3, 1, 3)),
            local_stack=((3, 1, 4), (3, 1, 1)),
        ).fit(samples, embedding_table=table)
        sample = samples[2]
        pred_live, map_live = est.localize(
            sample.features, sample.annotation.duration, sample.tokens, return_map=True
        )
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, est, epoch=1)
        restored = restore_estimator(load_checkpoint(path))
        pred_back, map_back = restored.localize(
            sample.features, sample.annotation.duration, sample.tokens, return_map=True
        )
        assert pred_back == pred_live
        np.testing.assert_array_equal(map_back, map_live)

    def test_optimizer_state_round_trips(self, trained_checkpoint):
        ckpt = load_checkpoint(trained_checkpoint)
        est = restore_estimator(ckpt)
        state = est.optimizer_.state_dict()["state"]
        assert state, "Adam state should not be empty after training"
        sample_state = next(iter(state.values()))
        assert "exp_avg" in sample_state

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOPE")
        with pytest.raises(DataFormatError):
            load_checkpoint(path)


class TestEvalVerb:
    def test_eval_produces_full_recall_table(self, trained_checkpoint, tmp_path):
        out_csv = tmp_path / "recall.csv"
        result = harness.evaluate(trained_checkpoint, out_csv=out_csv)
        for m in (0.3, 0.5, 0.7):
            value = result.recall(1, m)
            assert 0.0 <= value <= 1.0
        assert result.recall(1, 0.3) >= result.recall(1, 0.5) >= result.recall(1, 0.7)
        assert result.n_queries == SPEC["n_samples"]
        assert out_csv.read_text().startswith("n,m,recall,query_group")

    def test_eval_cli(self, trained_checkpoint, capsys):
        assert main(["eval", "--checkpoint", str(trained_checkpoint), "--n", "1", "--m", "0.5"]) == 0
        out = capsys.readouterr().out
        assert "IoU@0.5" in out


class TestPredictVerb:
    def test_predict_dump_is_consistent(self, trained_checkpoint, synth_dir, tmp_path):
        video = sorted((synth_dir / "features").glob("*.fv"))[0]
        samples = generate_synthetic_dataset(SyntheticSpec(**SPEC))
        query = samples[0].annotation.query_text
        dump = tmp_path / "maps"
        prediction = harness.predict(trained_checkpoint, video, query, dump_map_dir=dump)
        csv_path = dump / f"{video.stem}_map.csv"
        pgm_path = dump / f"{video.stem}_map.pgm"
        assert pgm_path.exists()
        dumped = np.loadtxt(csv_path, delimiter=",")
        # dumped argmax cell equals the returned interval's clip projection
        xs, ys = np.triu_indices(8)
        best = np.argmax(dumped[xs, ys])
        assert (xs[best], ys[best]) == (prediction.start_idx, prediction.end_idx)
        # masked region of the dump is all-zero
        for x in range(8):
            for y in range(x):
                assert dumped[x, y] == 0.0

    def test_predict_cli(self, trained_checkpoint, synth_dir, capsys):
        video = sorted((synth_dir / "features").glob("*.fv"))[0]
        code = main(["predict", "--checkpoint", str(trained_checkpoint),
                     "--video", str(video), "--query", "person waves near door"])
        assert code == 0
        assert "moment:" in capsys.readouterr().out

    def test_empty_query_rejected(self, trained_checkpoint, synth_dir):
        video = sorted((synth_dir / "features").glob("*.fv"))[0]
        assert main(["predict", "--checkpoint", str(trained_checkpoint),
                     "--video", str(video), "--query", "   "]) == 1


class TestDeterminism:
    def test_same_seed_gives_identical_loss_curves(self):
        spec = SyntheticSpec(**SPEC)
        samples = generate_synthetic_dataset(spec)
        table = synthetic_embedding_table(spec)
        kwargs = dict(
            l=8, d=6, p=4, k=3, dropout=0.5, batch_size=8, epochs=3, seed=7,
            global_stack=((1, 1, 4), (3, 1, 1)), head_stack=((3, 1, 4), (3, 1, 3)),
            local_stack=((3, 1, 4), (3, 1, 1)),
        )
        first = TemporalMomentLocalizer(**kwargs).fit(samples, embedding_table=table)
        second = TemporalMomentLocalizer(**kwargs).fit(samples, embedding_table=table)
        assert first.step_losses_ == second.step_losses_
        assert first.epoch_losses_ == second.epoch_losses_
        for (name_a, pa), (_, pb) in zip(
            first.network_.named_parameters(), second.network_.named_parameters()
        ):
            np.testing.assert_array_equal(pa.detach().numpy(), pb.detach().numpy(), err_msg=name_a)

    def test_different_seeds_diverge(self):
        spec = SyntheticSpec(**SPEC)
        samples = generate_synthetic_dataset(spec)
        table = synthetic_embedding_table(spec)
        kwargs = dict(
            l=8, d=6, p=4, k=3, dropout=0.0, batch_size=8, epochs=1,
            global_stack=((1, 1, 4), (3, 1, 1)), head_stack=((3, 1, 4), (3, 1, 3)),
            local_stack=((3, 1, 4), (3, 1, 1)),
        )
        a = TemporalMomentLocalizer(seed=0, **kwargs).fit(samples, embedding_table=table)
        b = TemporalMomentLocalizer(seed=1, **kwargs).fit(samples, embedding_table=table)
        assert a.step_losses_ != b.step_losses_
