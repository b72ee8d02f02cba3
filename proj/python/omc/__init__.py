"""Minifloat codec, affine restoration and federated training with compressed models."""

from ._omc import (
    Config,
    FloatFormat,
    OmcError,
    apply_transform,
    codec_report,
    compress_roundtrip,
    decode,
    encode,
    fit_transform,
    load_checkpoint,
    memory_ratio,
    pack,
    packed_size,
    quantize,
    run,
    select_variables,
    unpack,
)

__all__ = [
    "Config",
    "FloatFormat",
    "OmcError",
    "apply_transform",
    "codec_report",
    "compress_roundtrip",
    "decode",
    "encode",
    "fit_transform",
    "load_checkpoint",
    "memory_ratio",
    "pack",
    "packed_size",
    "quantize",
    "run",
    "select_variables",
    "unpack",
]
