"""Change-detection toolkit: block-level reasoner + mask-guided pixel decoder."""

from ._core import (
    ConfigError,
    FormatError,
    IoError,
    MissingArtifactError,
    RunParseError,
    config_defaults,
    decode,
    encode,
    evaluate,
    gen_data,
    grpo,
    infer,
    parse_runs,
    reward,
    score,
    serialize_runs,
    sft,
    train_decoder,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "IoError",
    "MissingArtifactError",
    "RunParseError",
    "config_defaults",
    "decode",
    "encode",
    "evaluate",
    "gen_data",
    "grpo",
    "infer",
    "parse_runs",
    "reward",
    "score",
    "serialize_runs",
    "sft",
    "train_decoder",
]
