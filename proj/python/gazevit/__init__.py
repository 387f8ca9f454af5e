"""Foveated tokenization, flow-matching policy, gaze prediction and stream sync."""

from ._core import (
    ConfigError,
    DivergenceError,
    InvalidInput,
    IoError,
    PatchSpec,
    PatternKind,
    PolicyStall,
    TokenizationPattern,
    TokenizedImage,
    align_gaze,
    assemble,
    build_pattern,
    count_flops,
    coverage_counts,
    flow_interpolate,
    gaze_offset,
    inside_fovea,
    mae_mask,
    parse_pattern,
    run_cli,
    serialize_pattern,
    spatial_softmax,
    sync_demo,
    tokenize,
    toy_images,
    train_mixture,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
