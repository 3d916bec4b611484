from ._core import (
    ConfigError,
    ContractError,
    Dataset,
    DynamicsPerturbation,
    Env,
    EnvSpec,
    Gan,
    InvalidStateError,
    NumericError,
    UsageError,
    config_hash,
    generate_dataset,
    normalized_score,
    pretrain_gan,
    read_dataset,
    read_metrics,
    subsample_trajectories,
    sweep,
    train,
    validate_config,
    weight_from_discriminator,
    write_dataset,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "Dataset",
    "DynamicsPerturbation",
    "Env",
    "EnvSpec",
    "Gan",
    "InvalidStateError",
    "NumericError",
    "UsageError",
    "config_hash",
    "generate_dataset",
    "normalized_score",
    "pretrain_gan",
    "read_dataset",
    "read_metrics",
    "subsample_trajectories",
    "sweep",
    "train",
    "validate_config",
    "weight_from_discriminator",
    "write_dataset",
]
