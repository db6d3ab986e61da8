"""Smoke tests for the python bindings."""

import json
import os
import pathlib
import tempfile

import pytest

import gradleak

DATA_DIR = pathlib.Path(os.environ.get("GRADLEAK_DATA_DIR", "data"))


@pytest.fixture(scope="module")
def tiny_model():
    config = gradleak.ModelConfig(
        num_layers=1,
        hidden_units=8,
        num_heads=1,
        filter_size=16,
        vocab_size=50,
        max_sequence_length=6,
        num_classes=2,
    )
    store = gradleak.init_weights(config, gradleak.InitSpec.normal(0.0, 0.02, 7))
    return config, gradleak.Model(config, store)


def test_metric_values():
    assert gradleak.recover_rate([1, 2, 3], [1, 2, 3]) == 100.0
    assert abs(gradleak.recover_rate(list(range(8)) + [99], list(range(9))) - 88.89) <= 0.01
    rouge1, degenerate = gradleak.rouge_n([0, 1, 2], [0, 1, 3], 1)
    assert not degenerate
    assert abs(rouge1 - 66.67) <= 0.01
    rouge_l, _ = gradleak.rouge_l([4, 3, 2, 1], [1, 2, 3, 4])
    assert abs(rouge_l - 25.0) <= 1e-9


def test_vocab_round_trip():
    vocab = gradleak.load_vocab(str(DATA_DIR / "vocab200.txt"))
    assert len(vocab) == 200
    ids = vocab.tokenize("the old dog sleeps near the door")
    assert vocab.unk_id not in ids
    assert vocab.detokenize(ids) == "the old dog sleeps near the door"


def test_forward_shape_and_determinism(tiny_model):
    config, model = tiny_model
    logits_a = model.forward([1, 2, 3])
    logits_b = model.forward([1, 2, 3])
    assert len(logits_a) == config.num_classes
    assert logits_a == logits_b


def test_weights_round_trip(tiny_model):
    config, model = tiny_model
    with tempfile.TemporaryDirectory() as tmp:
        path = str(pathlib.Path(tmp) / "weights.glkw")
        gradleak.save_weights(model.store, path)
        loaded = gradleak.load_weights(path)
        assert loaded.names() == model.store.names()
        assert loaded.tensor("classifier.bias") == model.store.tensor("classifier.bias")


def test_attack_runs_and_is_deterministic(tiny_model):
    config, model = tiny_model
    tokens = [3, 14, 7, 29]
    target = gradleak.simulate_participant(model, tokens, 1)

    attack = gradleak.AttackConfig()
    attack.max_iterations = 60
    attack.seed = 5
    attack.sequence_length = len(tokens)
    attack.num_classes = config.num_classes

    trace_a = gradleak.run_attack(model, target, attack, tokens)
    trace_b = gradleak.run_attack(model, target, attack, tokens)

    assert trace_a.iterations == 60
    assert len(trace_a.records) == 60
    assert [r["loss"] for r in trace_a.records] == [r["loss"] for r in trace_b.records]
    assert trace_a.records[-1]["loss"] < trace_a.records[0]["loss"]
    assert trace_a.recovered_tokens == trace_b.recovered_tokens
    assert all(0 <= t < config.vocab_size for t in trace_a.recovered_tokens)
    assert trace_a.recovered_label in (0, 1)


def test_dlg_is_tag_with_zero_alpha(tiny_model):
    config, model = tiny_model
    tokens = [10, 20, 30]
    target = gradleak.simulate_participant(model, tokens, 0)

    tag = gradleak.AttackConfig()
    tag.max_iterations = 40
    tag.seed = 9
    tag.sequence_length = len(tokens)
    tag.num_classes = config.num_classes
    tag.alpha_base = 0.0

    dlg = gradleak.AttackConfig()
    dlg.max_iterations = 40
    dlg.seed = 9
    dlg.sequence_length = len(tokens)
    dlg.num_classes = config.num_classes
    dlg.mode = gradleak.DistanceMode.DLG

    trace_tag = gradleak.run_attack(model, target, tag, tokens)
    trace_dlg = gradleak.run_attack(model, target, dlg, tokens)
    assert [r["loss"] for r in trace_tag.records] == [r["loss"] for r in trace_dlg.records]


def test_embedding_similarity_endpoints():
    rows = [[1.0, 2.0, 0.5], [0.0, -1.0, 2.0], [3.0, 0.0, -1.0]]
    value, _ = gradleak.embedding_similarity(rows, rows)
    assert abs(value - 1.0) <= 1e-12
    negated = [[-x for x in row] for row in rows]
    value, _ = gradleak.embedding_similarity(rows, negated)
    assert abs(value + 1.0) <= 1e-12


def test_experiment_from_config_file():
    with tempfile.TemporaryDirectory() as tmp:
        config = {
            "version": 1,
            "model_name": "nano",
            "dataset_name": "short",
            "model": {
                "num_layers": 1,
                "hidden_units": 8,
                "num_heads": 1,
                "filter_size": 16,
                "vocab_size": 200,
                "max_sequence_length": 16,
                "num_classes": 2,
            },
            "init": {"kind": "normal", "mean": 0.0, "stddev": 0.02, "seed": 3},
            "attack": {"max_iterations": 30},
            "data": {
                "vocab": str(DATA_DIR / "vocab200.txt"),
                "corpus": str(DATA_DIR / "corpus_short.tsv"),
                "num_sentences": 2,
            },
            "seeds": [1],
            "out_dir": str(pathlib.Path(tmp) / "out"),
            "workers": 2,
        }
        config_path = pathlib.Path(tmp) / "config.json"
        config_path.write_text(json.dumps(config))
        result = gradleak.run_experiment(str(config_path))
        assert result["reports"] == 2
        assert 0.0 <= result["recover_rate"] <= 100.0
        out = pathlib.Path(tmp) / "out"
        assert (out / "summary.csv").exists()
        assert (out / "trace_s0_seed1.jsonl").exists()
