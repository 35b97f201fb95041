"""Serialization of attention reports.

Two artifacts: a JSON summary (composed by the CLI) and an optional raw
attention matrix. The raw file holds the matrix as little-endian 32-bit
floats, row-major, no header; a JSON sidecar at ``<path>.json`` records the
shape, dtype, and key layout needed to interpret it.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .attention import AttentionReport, KeyLabel
from .diagnostics import AlignmentMetrics

__all__ = ["layout_to_json", "write_attention_matrix", "read_attention_matrix"]


def layout_to_json(layout: tuple[KeyLabel, ...]) -> list[dict]:
    return [
        {"source": lab.source, "index": lab.index, "position": [lab.position.x, lab.position.y]}
        for lab in layout
    ]


def write_attention_matrix(path: str | Path, report: AttentionReport) -> Path:
    """Write the attention matrix in raw form; returns the sidecar path."""
    path = Path(path)
    matrix = np.ascontiguousarray(report.attention, dtype="<f4")
    path.write_bytes(matrix.tobytes())
    sidecar = path.with_name(path.name + ".json")
    meta = {
        "dtype": "<f4",
        "order": "row-major",
        "shape": list(report.attention.shape),
        "key_layout": layout_to_json(report.key_layout),
        "query_layout": layout_to_json(report.query_layout),
    }
    sidecar.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return sidecar


def read_attention_matrix(path: str | Path) -> tuple[np.ndarray, dict]:
    """Load a raw attention file back using its sidecar."""
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    data = np.frombuffer(path.read_bytes(), dtype=meta["dtype"])
    return data.reshape(meta["shape"]), meta


def metrics_to_json(metrics: AlignmentMetrics) -> dict[str, float]:
    return metrics.as_dict()
