"""Rotary embeddings, frequency-band analysis, and shared-attention experiments."""

from .attention import (
    AttentionReport,
    BandMaskSpec,
    KeyLabel,
    ModulationSchedule,
    SharedQKV,
    SharingParams,
    TimestepRamp,
    TokenSet,
    adain,
    attend,
    build_shared_qkv,
    grid_positions,
    modulation_scales,
    ramp_at,
    shared_attend,
    shift_positions,
)
from .bands import (
    Band,
    BandPartition,
    DecayCurve,
    band_mask,
    decay_curve,
    decay_curve_to_csv,
    make_even_partition,
    mean_band_similarity,
)
from .diagnostics import AlignmentMetrics, BandAttribution, band_attribution, compute_alignment
from .errors import ConfigurationError, RopeFreqError, ShapeError, UnsupportedReportError
from .rope import (
    ChunkTerm,
    Position2D,
    RotaryConfig,
    apply_rope,
    apply_rope_batch,
    as_position,
    chunk_decomposition,
    chunk_rotation_angles,
    frequencies,
    reconstruct_inner_product,
    relative_inner_product,
    rotate_chunk,
)
from .synthetic import PlantedScene, make_grid, make_text, plant_scene

__version__ = "0.1.0"

__all__ = [
    "AlignmentMetrics",
    "AttentionReport",
    "Band",
    "BandAttribution",
    "BandMaskSpec",
    "BandPartition",
    "ChunkTerm",
    "ConfigurationError",
    "DecayCurve",
    "KeyLabel",
    "ModulationSchedule",
    "PlantedScene",
    "Position2D",
    "RopeFreqError",
    "RotaryConfig",
    "ShapeError",
    "SharedQKV",
    "SharingParams",
    "TimestepRamp",
    "TokenSet",
    "UnsupportedReportError",
    "adain",
    "apply_rope",
    "apply_rope_batch",
    "as_position",
    "attend",
    "band_attribution",
    "band_mask",
    "build_shared_qkv",
    "chunk_decomposition",
    "chunk_rotation_angles",
    "compute_alignment",
    "decay_curve",
    "decay_curve_to_csv",
    "frequencies",
    "grid_positions",
    "make_even_partition",
    "make_grid",
    "make_text",
    "mean_band_similarity",
    "modulation_scales",
    "plant_scene",
    "ramp_at",
    "reconstruct_inner_product",
    "relative_inner_product",
    "rotate_chunk",
    "shared_attend",
    "shift_positions",
]
