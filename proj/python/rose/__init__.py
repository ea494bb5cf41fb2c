"""Time-domain speech enhancement with an attention U-Net."""

from ._rose import (
    Checkpoint,
    ConfigError,
    DegenerateInputError,
    DimensionError,
    FormatError,
    IoError,
    LengthError,
    NumericError,
    initial_checkpoint,
    load_checkpoint,
    mfcc,
    read_wav,
    segmental_snr,
    si_sdr,
    simulate_echo,
    stft_magnitude,
    stoi,
    synth_voiced_clip,
    total_loss,
    train,
    write_wav,
)

__all__ = [
    "Checkpoint",
    "ConfigError",
    "DegenerateInputError",
    "DimensionError",
    "FormatError",
    "IoError",
    "LengthError",
    "NumericError",
    "initial_checkpoint",
    "load_checkpoint",
    "mfcc",
    "read_wav",
    "segmental_snr",
    "si_sdr",
    "simulate_echo",
    "stft_magnitude",
    "stoi",
    "synth_voiced_clip",
    "total_loss",
    "train",
    "write_wav",
]
