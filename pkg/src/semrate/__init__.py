"""Attention-guided multi-resolution patch coding over a rate-limited channel."""

__version__ = "0.1.0"

from .attn import (
    AttentionGrid,
    HeadAttentionRows,
    aggregate,
    read_attn_file,
    synth_attention,
    write_attn_file,
)
from .allocator import (
    DEFAULT_TABLE,
    RateTable,
    ResolutionMap,
    brute_force_reference,
    lq,
    select_resolutions,
    select_single_level,
    uq,
)
from .channel import (
    Constant,
    GilbertElliott,
    IidUniform,
    RateTrace,
    RayleighCapacity,
    generate_trace,
    read_trace_file,
    write_trace_file,
)
from .codec import EncodedPatch, decode_patch, encode_patch
from .errors import FormatError, SemrateError, ValidationError
from .frame import build_frame, frame_overhead, parse_frame
from .pipeline import (
    CorpusItem,
    TransmissionReport,
    make_synthetic_corpus,
    read_ppm,
    receive,
    run_experiment,
    transmit,
    weighted_mse,
    write_ppm,
)

__all__ = [
    "AttentionGrid",
    "HeadAttentionRows",
    "RateTable",
    "ResolutionMap",
    "DEFAULT_TABLE",
    "aggregate",
    "brute_force_reference",
    "lq",
    "uq",
    "read_attn_file",
    "write_attn_file",
    "select_resolutions",
    "select_single_level",
    "synth_attention",
    "Constant",
    "IidUniform",
    "GilbertElliott",
    "RayleighCapacity",
    "RateTrace",
    "generate_trace",
    "read_trace_file",
    "write_trace_file",
    "EncodedPatch",
    "encode_patch",
    "decode_patch",
    "build_frame",
    "parse_frame",
    "frame_overhead",
    "CorpusItem",
    "TransmissionReport",
    "make_synthetic_corpus",
    "read_ppm",
    "write_ppm",
    "receive",
    "transmit",
    "run_experiment",
    "weighted_mse",
    "FormatError",
    "SemrateError",
    "ValidationError",
]
