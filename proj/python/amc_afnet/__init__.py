"""AFNet automatic modulation classification (C++ core)."""

from ._core import (
    AmcError,
    Model,
    ce_loss,
    confidence_weight,
    constellation,
    count_fusion_params,
    cw_loss,
    evaluate,
    generate,
    lambda_softmax,
    modulations,
    read_dataset,
    selftest,
    synthesize_frame,
    topk_entropy,
    train_two_stage,
)

__all__ = [
    "AmcError",
    "Model",
    "ce_loss",
    "confidence_weight",
    "constellation",
    "count_fusion_params",
    "cw_loss",
    "evaluate",
    "generate",
    "lambda_softmax",
    "modulations",
    "read_dataset",
    "selftest",
    "synthesize_frame",
    "topk_entropy",
    "train_two_stage",
]
