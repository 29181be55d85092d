"""FAST test-input prioritization toolkit (Python bindings)."""

from ._fastprio import (
    FastprioError,
    Model,
    ValidationError,
    apfd,
    assess,
    build_mask,
    dsa_rank,
    gini,
    lsa_rank,
    margin,
    maxp,
    mc_dropout_rank,
    nac_rank,
    nbc_rank,
    nns_rank,
    prioritize,
    random_rank,
    synthetic,
    train_dense,
    trc,
    trc_curve,
)

__all__ = [
    "FastprioError",
    "Model",
    "ValidationError",
    "apfd",
    "assess",
    "build_mask",
    "dsa_rank",
    "gini",
    "lsa_rank",
    "margin",
    "maxp",
    "mc_dropout_rank",
    "nac_rank",
    "nbc_rank",
    "nns_rank",
    "prioritize",
    "random_rank",
    "synthetic",
    "train_dense",
    "trc",
    "trc_curve",
]
