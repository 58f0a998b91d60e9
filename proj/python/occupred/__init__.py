"""Reason-augmented next-occupation prediction: metrics, objectives and the staged pipeline."""

from ._core import (
    ConfigError,
    DigestMismatch,
    Error,
    InvalidArgument,
    MissingStage,
    Occupation,
    Taxonomy,
    acc_em,
    acc_rm,
    bleu,
    dpo_loss,
    dpo_loss_grad,
    dpo_margin,
    mcnemar,
    metric_tokens,
    parse_judge_output,
    parse_output,
    passes_threshold,
    rouge_l,
    rouge_n,
    run_stage,
    stage_names,
    version,
)

__version__ = version().split()[-1]

__all__ = [
    "ConfigError",
    "DigestMismatch",
    "Error",
    "InvalidArgument",
    "MissingStage",
    "Occupation",
    "Taxonomy",
    "acc_em",
    "acc_rm",
    "bleu",
    "dpo_loss",
    "dpo_loss_grad",
    "dpo_margin",
    "mcnemar",
    "metric_tokens",
    "parse_judge_output",
    "parse_output",
    "passes_threshold",
    "rouge_l",
    "rouge_n",
    "run_stage",
    "stage_names",
    "version",
]
