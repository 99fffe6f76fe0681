"""Pipeline orchestration: config, I/O, synthetic cities, stages, audit API."""

from .config import ConfigError, PipelineConfig, load_config
from .vectorio import load_vector, save_vector
from .synth import SynthParams, synth_city, write_synth_city
from .stages import DependencyError, STAGES, run_stage
from .matching import AuditTask, match_svi_to_buildings

__all__ = [
    "ConfigError", "PipelineConfig", "load_config",
    "load_vector", "save_vector",
    "SynthParams", "synth_city", "write_synth_city",
    "DependencyError", "STAGES", "run_stage",
    "AuditTask", "match_svi_to_buildings",
]
