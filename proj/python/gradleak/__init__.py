"""Gradient-leakage laboratory: reconstruct training text from the gradients
of small transformer classifiers."""

from ._core import (
    AttackConfig,
    AttackTrace,
    DistanceMode,
    GradientSet,
    InitSpec,
    Model,
    ModelConfig,
    ParameterStore,
    Vocab,
    embedding_similarity,
    init_weights,
    load_vocab,
    load_weights,
    recover_rate,
    rouge_l,
    rouge_n,
    run_attack,
    run_experiment,
    save_weights,
    simulate_participant,
)

__all__ = [
    "AttackConfig",
    "AttackTrace",
    "DistanceMode",
    "GradientSet",
    "InitSpec",
    "Model",
    "ModelConfig",
    "ParameterStore",
    "Vocab",
    "embedding_similarity",
    "init_weights",
    "load_vocab",
    "load_weights",
    "recover_rate",
    "rouge_l",
    "rouge_n",
    "run_attack",
    "run_experiment",
    "save_weights",
    "simulate_participant",
]
