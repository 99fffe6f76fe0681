"""Flat key-value pipeline configuration.

Files hold ``key = value`` lines (# comments allowed).  Every default can
be overridden; unknown keys are rejected so typos fail loudly.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    # mandatory
    seed: int = None  # type: ignore[assignment]
    workdir: str = None  # type: ignore[assignment]

    # projection origin for WGS84 I/O
    origin_lon: float = 116.4
    origin_lat: float = 39.9
    city_id: str = "synth"

    # vectorization
    pixel_size: float = 1.0
    tile_size_px: int = 500
    simplify_tolerance: float = 0.5
    seam_buffer: float = 2.0
    edge_similarity: float = 0.5
    min_building_area: float = 4.0

    # features
    neighbor_radius: float = 100.0
    poi_radius: float = 300.0
    kde_bandwidth: float = 300.0
    kde_cell: float = 50.0
    street_alpha: float = 0.01
    street_setback: float = 100.0

    # ensemble
    floor_height: float = 3.0
    ensemble_members: int = 100
    grid_max_depths: str = "3,6"
    grid_rounds: str = "100,300"
    learning_rate: float = 0.1
    subsample: float = 1.0
    min_child_weight: int = 1
    min_tier_samples: int = 200
    test_fraction: float = 0.10
    validation_fraction: float = 0.20

    # quality / age
    quality_buffer: float = 100.0
    svi_match_radius: float = 100.0

    # synthetic city
    synth_n_buildings: int = 2000
    synth_extent: float = 2800.0
    synth_block_pitch: float = 100.0
    synth_mask_flip_rate: float = 0.0002
    synth_label_fraction: float = 0.7
    synth_plot_fraction: float = 0.85
    synth_svi_spacing: float = 60.0

    # audit server
    audit_host: str = "127.0.0.1"
    audit_port: int = 8741
    low_n_threshold: int = 30

    def grid_params(self):
        from ..ensemble import GbtParams

        depths = [int(v) for v in str(self.grid_max_depths).split(",") if v.strip()]
        rounds = [int(v) for v in str(self.grid_rounds).split(",") if v.strip()]
        return tuple(
            GbtParams(max_depth=d, rounds=r, learning_rate=self.learning_rate,
                      min_child_weight=self.min_child_weight, subsample=self.subsample)
            for d in depths for r in rounds
        )

    def validate(self) -> "PipelineConfig":
        if self.seed is None:
            raise ConfigError("config key 'seed' is mandatory")
        if self.workdir is None:
            raise ConfigError("config key 'workdir' is mandatory")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(name: str, raw: str):
    t = _FIELD_TYPES[name]
    raw = raw.strip()
    if t in ("int",):
        return int(raw)
    if t in ("float",):
        return float(raw)
    return raw


def parse_config(text: str, overrides: dict | None = None) -> PipelineConfig:
    values: dict = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {ln}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {ln}: unknown config key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except ValueError as exc:
            raise ConfigError(f"line {ln}: bad value for {key!r}: {exc}") from exc
    for k, v in (overrides or {}).items():
        if k not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {k!r}")
        values[k] = v
    return PipelineConfig(**values).validate()


def load_config(path, overrides: dict | None = None) -> PipelineConfig:
    with open(path) as f:
        return parse_config(f.read(), overrides)


def config_text(cfg: PipelineConfig) -> str:
    lines = []
    for f in fields(PipelineConfig):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: PipelineConfig) -> str:
    import hashlib

    return hashlib.sha256(config_text(cfg).encode()).hexdigest()[:16]
