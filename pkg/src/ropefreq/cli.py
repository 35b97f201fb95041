"""Command-line front end: decay curves, schedules, band info, experiments.

Subcommands. All outputs are deterministic given the same flags and config.

* ``decay-curve``  CSV of mean band similarity vs. integer position shift.
* ``schedule``     CSV of the per-chunk modulation scales for each axis.
* ``bands``        JSON listing band chunk ranges and frequency extrema.
* ``shared-attn``  JSON report of shared-attention alignment metrics from an
  experiment config file (plus optional raw attention matrices).

Exit codes: 0 success, 2 usage error, 3 config/validation error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attention import (
    BandMaskSpec,
    ModulationSchedule,
    SharingParams,
    TimestepRamp,
    shared_attend,
)
from .bands import Band, decay_curve, decay_curve_to_csv, make_even_partition
from .diagnostics import band_attribution, compute_alignment
from .errors import ConfigurationError, RopeFreqError
from .reportio import layout_to_json, write_attention_matrix
from .rope import RotaryConfig, frequencies
from .synthetic import make_grid, make_text, plant_scene

__all__ = ["ExperimentConfig", "main"]

PARTITION_NAMES = ("default", "single_x", "single_y", "interleaved", "flux")


def _check_keys(d: dict, allowed: tuple[str, ...], context: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown fields in {context}: {unknown}")


def _require(d: dict, key: str, context: str):
    if key not in d:
        raise ConfigurationError(f"missing required field {key!r} in {context}")
    return d[key]


def build_rotary(dim: int, rope_base: float, partition) -> RotaryConfig:
    if isinstance(partition, str):
        if partition == "default":
            return RotaryConfig(dim=dim, rope_base=rope_base)
        if partition == "single_x":
            return RotaryConfig.single_axis(dim, rope_base, "x")
        if partition == "single_y":
            return RotaryConfig.single_axis(dim, rope_base, "y")
        if partition == "interleaved":
            return RotaryConfig.interleaved(dim, rope_base)
        if partition == "flux":
            return RotaryConfig.flux_like(dim, rope_base)
        raise ConfigurationError(
            f"partition must be one of {PARTITION_NAMES} or an explicit mapping, got {partition!r}"
        )
    if isinstance(partition, dict):
        _check_keys(partition, ("x", "y", "temporal"), "rotary.partition")
        return RotaryConfig(
            dim=dim,
            rope_base=rope_base,
            x_chunks=tuple(partition.get("x", ())),
            y_chunks=tuple(partition.get("y", ())),
            temporal_chunks=tuple(partition.get("temporal", ())),
        )
    raise ConfigurationError(f"invalid rotary partition: {partition!r}")


_SHARING_KEYS = ("mode", "s", "adain", "s_hf", "s_lf", "beta", "offset", "ramp", "band_mask")
_RAMP_KEYS = ("s_hf_start", "s_hf_end", "s_lf_start", "s_lf_end", "total_steps")
_BAND_MASK_KEYS = ("label", "start", "stop", "mode", "scale")


def _normalize_sharing(raw: dict) -> dict:
    """Validate a sharing section and keep only the keys its mode uses."""
    _check_keys(raw, _SHARING_KEYS, "sharing")
    mode = _require(raw, "mode", "sharing")
    out: dict = {"mode": mode, "adain": bool(raw.get("adain", True))}
    if mode == "none":
        pass
    elif mode == "plain":
        out["s"] = float(raw.get("s", 1.0))
    elif mode == "shifted":
        out["s"] = float(raw.get("s", 1.0))
        offset = _require(raw, "offset", "sharing (shifted mode)")
        if not isinstance(offset, (list, tuple)) or len(offset) != 2:
            raise ConfigurationError(f"offset must be [x, y], got {offset!r}")
        out["offset"] = [int(offset[0]), int(offset[1])]
    elif mode == "frequency_aware":
        out["s_hf"] = float(_require(raw, "s_hf", "sharing (frequency_aware mode)"))
        out["s_lf"] = float(_require(raw, "s_lf", "sharing (frequency_aware mode)"))
        out["beta"] = float(raw.get("beta", 2.0))
        ramp = raw.get("ramp")
        if ramp is not None:
            _check_keys(ramp, _RAMP_KEYS, "sharing.ramp")
            out["ramp"] = {
                k: (int if k == "total_steps" else float)(_require(ramp, k, "sharing.ramp"))
                for k in _RAMP_KEYS
            }
    else:
        raise ConfigurationError(f"unknown sharing mode {mode!r}")
    mask = raw.get("band_mask")
    if mask is not None:
        _check_keys(mask, _BAND_MASK_KEYS, "sharing.band_mask")
        out["band_mask"] = {
            "label": str(mask.get("label", "masked")),
            "start": int(_require(mask, "start", "sharing.band_mask")),
            "stop": int(_require(mask, "stop", "sharing.band_mask")),
            "mode": str(_require(mask, "mode", "sharing.band_mask")),
            "scale": None if mask.get("scale") is None else float(mask["scale"]),
        }
    return out


def _sharing_params(sharing: dict, config: RotaryConfig) -> SharingParams:
    mode = sharing["mode"]
    kwargs: dict = {"mode": mode, "adain_enabled": sharing.get("adain", True)}
    if mode in ("plain", "shifted"):
        kwargs["s"] = sharing.get("s", 1.0)
    if mode == "shifted":
        kwargs["offset"] = tuple(sharing["offset"])
    if mode == "frequency_aware":
        kwargs["schedule"] = ModulationSchedule.for_config(
            config, sharing["s_hf"], sharing["s_lf"], sharing.get("beta", 2.0)
        )
        ramp = sharing.get("ramp")
        if ramp is not None:
            kwargs["ramp"] = TimestepRamp(**ramp)
    mask = sharing.get("band_mask")
    if mask is not None:
        kwargs["band_mask_override"] = BandMaskSpec(
            band=Band(mask["label"], mask["start"], mask["stop"]),
            mode=mask["mode"],
            scale=mask["scale"],
        )
    return SharingParams(**kwargs)


_TOP_KEYS = (
    "rotary",
    "grid",
    "scene",
    "text_tokens",
    "heads",
    "sharing",
    "step",
    "attribution_bands",
    "sweep",
    "seed",
    "output",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated shared-attention experiment description.

    Mirrors the JSON schema one-to-one so that parsing and re-emitting a
    config is lossless; unknown fields anywhere are rejected.
    """

    dim: int
    rope_base: float
    partition: object
    width: int
    height: int
    scene_kind: str
    noise_level: float
    scene_seed: int | None
    shift: int
    style_strength: float
    text_tokens: int
    heads: int
    sharing: dict
    step: int | None
    attribution_bands: int | None
    sweep: tuple | None
    seed: int
    output_report: str | None
    output_attention: str | None

    @classmethod
    def from_json_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigurationError("experiment config must be a JSON object")
        _check_keys(d, _TOP_KEYS, "config")
        rotary = _require(d, "rotary", "config")
        _check_keys(rotary, ("dim", "rope_base", "partition"), "rotary")
        grid = _require(d, "grid", "config")
        _check_keys(grid, ("width", "height"), "grid")
        scene = _require(d, "scene", "config")
        _check_keys(scene, ("kind", "noise_level", "seed", "shift", "style_strength"), "scene")
        sweep = d.get("sweep")
        if sweep is not None:
            if not isinstance(sweep, list) or not sweep:
                raise ConfigurationError("sweep must be a non-empty list of sharing overrides")
            sweep = tuple(dict(item) for item in sweep)
        output = d.get("output") or {}
        _check_keys(output, ("report", "attention"), "output")
        cfg = cls(
            dim=int(_require(rotary, "dim", "rotary")),
            rope_base=float(rotary.get("rope_base", 10000.0)),
            partition=rotary.get("partition", "default"),
            width=int(_require(grid, "width", "grid")),
            height=int(_require(grid, "height", "grid")),
            scene_kind=str(scene.get("kind", "shuffle")),
            noise_level=float(scene.get("noise_level", 0.1)),
            scene_seed=None if scene.get("seed") is None else int(scene["seed"]),
            shift=int(scene.get("shift", 0)),
            style_strength=float(scene.get("style_strength", 0.0)),
            text_tokens=int(d.get("text_tokens", 0)),
            heads=int(d.get("heads", 1)),
            sharing=_normalize_sharing(_require(d, "sharing", "config")),
            step=None if d.get("step") is None else int(d["step"]),
            attribution_bands=None
            if d.get("attribution_bands") is None
            else int(d["attribution_bands"]),
            sweep=sweep,
            seed=int(_require(d, "seed", "config")),
            output_report=output.get("report"),
            output_attention=output.get("attention"),
        )
        cfg.build_rotary()  # fail fast on bad partitions
        for label, sharing, _ in cfg.iter_entries():
            _sharing_params(sharing, cfg.build_rotary())
        return cfg

    def to_json_dict(self) -> dict:
        d: dict = {
            "rotary": {"dim": self.dim, "rope_base": self.rope_base, "partition": self.partition},
            "grid": {"width": self.width, "height": self.height},
            "scene": {
                "kind": self.scene_kind,
                "noise_level": self.noise_level,
                "seed": self.scene_seed,
                "shift": self.shift,
                "style_strength": self.style_strength,
            },
            "text_tokens": self.text_tokens,
            "heads": self.heads,
            "sharing": self.sharing,
            "step": self.step,
            "attribution_bands": self.attribution_bands,
            "sweep": list(self.sweep) if self.sweep is not None else None,
            "seed": self.seed,
            "output": {"report": self.output_report, "attention": self.output_attention},
        }
        return d

    def build_rotary(self) -> RotaryConfig:
        return build_rotary(self.dim, self.rope_base, self.partition)

    def iter_entries(self):
        """Yield (label, sharing dict, step) for the base run or each sweep item."""
        if self.sweep is None:
            yield "entry0", self.sharing, self.step
            return
        for i, overrides in enumerate(self.sweep):
            merged = dict(self.sharing)
            step = self.step
            for key, value in overrides.items():
                if key == "step":
                    step = None if value is None else int(value)
                else:
                    merged[key] = value
            yield f"entry{i}", _normalize_sharing(merged), step


def run_experiment(cfg: ExperimentConfig) -> tuple[dict, list]:
    """Evaluate every entry; returns (report dict, attention reports)."""
    config = cfg.build_rotary()
    scene_seed = cfg.scene_seed if cfg.scene_seed is not None else cfg.seed + 1
    base = make_grid(
        cfg.width, cfg.height, cfg.dim, seed=cfg.seed, style_strength=cfg.style_strength
    )
    scene = plant_scene(
        base, kind=cfg.scene_kind, noise_level=cfg.noise_level, seed=scene_seed, shift=cfg.shift
    )
    text = make_text(cfg.text_tokens, cfg.dim, seed=cfg.seed + 2)
    partition = (
        make_even_partition(config, cfg.attribution_bands, "all")
        if cfg.attribution_bands
        else None
    )

    entries = []
    reports = []
    for label, sharing, step in cfg.iter_entries():
        params = _sharing_params(sharing, config)
        report = shared_attend(
            scene.target,
            text,
            scene.reference,
            params,
            config,
            heads=cfg.heads,
            step=step,
            band_partition=partition,
        )
        metrics = compute_alignment(report, scene)
        entry = {
            "label": label,
            "sharing": sharing,
            "step": step,
            "alignment": metrics.as_dict(),
            "notes": list(report.notes),
            "n_queries": int(report.attention.shape[0]),
            "n_keys": int(report.attention.shape[1]),
        }
        if partition is not None and any(
            k.source == "reference-image" for k in report.key_layout
        ):
            attribution = band_attribution(report, partition)
            entry["band_attribution"] = attribution.mean_abs_logit
        else:
            entry["band_attribution"] = None
        entries.append(entry)
        reports.append(report)

    result: dict = {"config": cfg.to_json_dict(), "entries": entries}
    if len(entries) > 1:
        keys = entries[0]["alignment"].keys()
        result["mean_alignment"] = {
            k: float(np.mean([e["alignment"][k] for e in entries])) for k in keys
        }
    if entries:
        result["key_layout"] = layout_to_json(reports[0].key_layout)
    return result, reports


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _info(args, message: str) -> None:
    if not args.quiet:
        print(message)


def cmd_decay_curve(args) -> int:
    if args.delta_max < 0:
        raise ConfigurationError(f"--delta-max must be >= 0, got {args.delta_max}")
    config = RotaryConfig.single_axis(args.dim, args.rope_base, args.axis)
    partition = make_even_partition(config, args.bands, args.axis)
    curve = decay_curve(
        range(args.delta_max + 1), partition, config, include_full=args.include_full
    )
    csv_text = decay_curve_to_csv(curve)
    out = Path(args.out)
    out.write_text(csv_text)
    _info(args, f"wrote {out}")
    return 0


def cmd_schedule(args) -> int:
    config = build_rotary(args.dim, 10000.0, args.partition)
    schedule = ModulationSchedule.for_config(config, args.s_hf, args.s_lf, args.beta)
    lines = ["axis,d,s_d"]
    for axis, chunks in (
        ("x", config.x_chunks),
        ("y", config.y_chunks),
        ("temporal", config.temporal_chunks),
    ):
        for d in chunks:
            lines.append(f"{axis},{d},{format(schedule.per_chunk_scales[d], '.17g')}")
    out = Path(args.out)
    out.write_text("\n".join(lines) + "\n")
    _info(args, f"wrote {out}")
    return 0


def cmd_bands(args) -> int:
    config = RotaryConfig.single_axis(args.dim, args.rope_base)
    partition = make_even_partition(config, args.bands, "all")
    theta = frequencies(config)
    listing = {
        "dim": args.dim,
        "rope_base": args.rope_base,
        "bands": [
            {
                "label": b.label,
                "start": b.start,
                "stop": b.stop,
                "theta_min": float(theta[b.stop - 1]),
                "theta_max": float(theta[b.start]),
            }
            for b in partition.bands
        ],
    }
    text = _dump_json(listing)
    if args.out:
        Path(args.out).write_text(text)
        _info(args, f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_shared_attn(args) -> int:
    raw = json.loads(Path(args.config).read_text())
    cfg = ExperimentConfig.from_json_dict(raw)
    if args.seed is not None:
        cfg = ExperimentConfig.from_json_dict({**cfg.to_json_dict(), "seed": args.seed})
    if args.emit_config:
        Path(args.emit_config).write_text(_dump_json(cfg.to_json_dict()))
        _info(args, f"wrote {args.emit_config}")
        return 0

    result, reports = run_experiment(cfg)

    report_path = args.out or cfg.output_report
    if report_path is None:
        sys.stdout.write(_dump_json(result))
    else:
        Path(report_path).write_text(_dump_json(result))
        _info(args, f"wrote {report_path}")
    if cfg.output_attention:
        base = Path(cfg.output_attention)
        for entry, report in zip(result["entries"], reports):
            if len(reports) == 1:
                path = base
            else:
                path = base.with_name(f"{base.stem}.{entry['label']}{base.suffix}")
            write_attention_matrix(path, report)
            _info(args, f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ropefreq",
        description="Rotary-embedding frequency analysis and shared-attention experiments.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file path")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--quiet", action="store_true", help="suppress status messages")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "decay-curve",
        parents=[common],
        help="mean band similarity vs. position shift, as CSV",
    )
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--rope-base", type=float, default=10000.0)
    p.add_argument("--bands", type=int, default=3)
    p.add_argument("--delta-max", type=int, default=64)
    p.add_argument("--axis", choices=["x", "y"], default="x")
    p.add_argument("--include-full", action="store_true", help="add a series over all chunks")
    p.set_defaults(func=cmd_decay_curve, out_required=True)

    p = sub.add_parser(
        "schedule", parents=[common], help="per-chunk modulation scales, as CSV"
    )
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--s-hf", type=float, required=True)
    p.add_argument("--s-lf", type=float, required=True)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--partition", default="default")
    p.set_defaults(func=cmd_schedule, out_required=True)

    p = sub.add_parser(
        "bands", parents=[common], help="band chunk ranges and frequency extrema, as JSON"
    )
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--rope-base", type=float, default=10000.0)
    p.add_argument("--bands", type=int, default=3)
    p.set_defaults(func=cmd_bands, out_required=False)

    p = sub.add_parser(
        "shared-attn", parents=[common], help="run a shared-attention experiment config"
    )
    p.add_argument("config", help="path to an experiment config JSON file")
    p.add_argument("--emit-config", help="write the normalized config here and exit")
    p.set_defaults(func=cmd_shared_attn, out_required=False)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "out_required", False) and not args.out:
        parser.error(f"{args.command} requires --out")
    try:
        return args.func(args)
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 3
    except RopeFreqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
