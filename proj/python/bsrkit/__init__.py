"""Python bindings for the bsrkit C++ core."""

from ._core import (
    Error,
    bsr_float16,
    bsr_int16,
    dct_matrix,
    decode_float16,
    default_config,
    encode_float16,
    fbank,
    fuse,
    load_wav,
    mfcc,
    mix,
    normalize_peak,
    pink_noise,
    power_spectrum,
    predict,
    read_scores,
    run,
    selftest,
    sgdr_lr,
    snr_gain,
    white_noise,
)

__all__ = [
    "Error",
    "bsr_float16",
    "bsr_int16",
    "dct_matrix",
    "decode_float16",
    "default_config",
    "encode_float16",
    "fbank",
    "fuse",
    "load_wav",
    "mfcc",
    "mix",
    "normalize_peak",
    "pink_noise",
    "power_spectrum",
    "predict",
    "read_scores",
    "run",
    "selftest",
    "sgdr_lr",
    "snr_gain",
    "white_noise",
]
