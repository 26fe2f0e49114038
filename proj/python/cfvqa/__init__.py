"""Counterfactual debiasing for medical visual question answering."""

from ._core import (
    CausalModel,
    Error,
    ImageSource,
    InfeasibleSplitError,
    QASample,
    SynthConfig,
    SynthCorpus,
    TrainConfig,
    ValidationError,
    bayes_accuracy,
    compare,
    debias,
    evaluate,
    explain,
    generate_synth,
    gradcheck,
    load_dataset,
    normalize,
    prior_only_baseline,
    prior_table_csv,
    resplit,
    to_canonical_jsonl,
    train,
)

__all__ = [
    "CausalModel",
    "Error",
    "ImageSource",
    "InfeasibleSplitError",
    "QASample",
    "SynthConfig",
    "SynthCorpus",
    "TrainConfig",
    "ValidationError",
    "bayes_accuracy",
    "compare",
    "debias",
    "evaluate",
    "explain",
    "generate_synth",
    "gradcheck",
    "load_dataset",
    "normalize",
    "prior_only_baseline",
    "prior_table_csv",
    "resplit",
    "to_canonical_jsonl",
    "train",
]
