"""Quantitative diagnostics for shared-attention reports.

The central question: does a target query's attention to the reference land
on the reference token at the *same grid position* (positional alignment,
the copying signature) or on the token holding its *matching content*
(semantic alignment)? Masses read the softmax rows directly; argmax rates
count winners among the reference keys, since with tied query/key features
the query's own target key trivially dominates the global argmax and carries
no information about the reference competition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionReport
from .bands import BandPartition
from .errors import ShapeError, UnsupportedReportError
from .synthetic import PlantedScene

__all__ = ["AlignmentMetrics", "BandAttribution", "compute_alignment", "band_attribution"]


@dataclass(frozen=True)
class AlignmentMetrics:
    """Attention-mass and argmax alignment summary over target image queries.

    All fields live in [0, 1]; the two mass numerators are bounded by
    ``reference_mass``. Text keys never enter a numerator but stay in the
    softmax normalization.
    """

    positional_mass: float
    semantic_mass: float
    argmax_positional_rate: float
    argmax_semantic_rate: float
    reference_mass: float

    def as_dict(self) -> dict[str, float]:
        return {
            "positional_mass": self.positional_mass,
            "semantic_mass": self.semantic_mass,
            "argmax_positional_rate": self.argmax_positional_rate,
            "argmax_semantic_rate": self.argmax_semantic_rate,
            "reference_mass": self.reference_mass,
        }


def _rows_by_source(layout, source: str) -> list[int]:
    return [i for i, lab in enumerate(layout) if lab.source == source]


def compute_alignment(
    report: AttentionReport, scene: PlantedScene, radius: int = 0
) -> AlignmentMetrics:
    """Alignment metrics of a report against the scene that produced it.

    Positional alignment means exact grid-coordinate equality between the
    query and a reference key; ``radius > 0`` relaxes it to a Chebyshev
    neighborhood (not used by the standard experiments). A report without
    reference keys yields all-zero reference metrics.
    """
    q_rows = _rows_by_source(report.query_layout, "target-image")
    ref_cols = _rows_by_source(report.key_layout, "reference-image")
    n = scene.target.n_tokens
    if len(q_rows) != n:
        raise ShapeError(
            f"report has {len(q_rows)} image queries but the scene has {n} tokens"
        )
    if not ref_cols:
        return AlignmentMetrics(0.0, 0.0, 0.0, 0.0, 0.0)
    if len(ref_cols) != n:
        raise ShapeError(
            f"report has {len(ref_cols)} reference keys but the scene has {n} tokens"
        )

    by_index = {report.key_layout[c].index: c for c in ref_cols}
    if sorted(by_index) != list(range(n)):
        raise ShapeError("reference keys do not cover the scene's token indices")
    ref_positions = np.array(
        [report.key_layout[c].position.as_tuple() for c in ref_cols], dtype=np.int64
    )

    attn = report.attention
    ref_col_arr = np.array(ref_cols)
    pos_mass = sem_mass = ref_mass = 0.0
    pos_hits = sem_hits = 0
    for i, row in enumerate(q_rows):
        qpos = report.query_layout[row].position
        dist = np.abs(ref_positions - np.array(qpos.as_tuple())).max(axis=1)
        aligned = ref_col_arr[dist <= radius]
        sem_col = by_index[int(scene.correspondence[i])]

        ref_row = attn[row, ref_col_arr]
        ref_mass += float(ref_row.sum())
        pos_mass += float(attn[row, aligned].sum())
        sem_mass += float(attn[row, sem_col])

        winner = ref_col_arr[int(np.argmax(ref_row))]
        if winner in aligned:
            pos_hits += 1
        if winner == sem_col:
            sem_hits += 1

    nq = len(q_rows)
    return AlignmentMetrics(
        positional_mass=pos_mass / nq,
        semantic_mass=sem_mass / nq,
        argmax_positional_rate=pos_hits / nq,
        argmax_semantic_rate=sem_hits / nq,
        reference_mass=ref_mass / nq,
    )


@dataclass(frozen=True)
class BandAttribution:
    """Mean absolute per-band logit contribution over image-query/reference pairs."""

    labels: tuple[str, ...]
    mean_abs_logit: dict[str, float]
    n_pairs: int


def band_attribution(report: AttentionReport, partition: BandPartition) -> BandAttribution:
    """Summarize how much each frequency band contributes to reference logits."""
    if report.per_band_logits is None:
        raise UnsupportedReportError("report carries no per-band logits")
    if report.band_partition != partition:
        raise UnsupportedReportError(
            "partition does not match the one the report was computed with"
        )
    q_rows = _rows_by_source(report.query_layout, "target-image")
    ref_cols = _rows_by_source(report.key_layout, "reference-image")
    if not ref_cols:
        raise UnsupportedReportError("report has no reference keys to attribute")
    block = report.per_band_logits[np.ix_(range(len(partition.bands)), q_rows, ref_cols)]
    means = np.abs(block).mean(axis=(1, 2))
    labels = partition.labels
    return BandAttribution(
        labels=labels,
        mean_abs_logit={lab: float(m) for lab, m in zip(labels, means)},
        n_pairs=len(q_rows) * len(ref_cols),
    )
