import pytest

from geoattrib.pipeline.config import parse_config
from geoattrib.pipeline.stages import STAGES, run_stage

SMALL_CITY_CONFIG = """
seed = 61
synth_n_buildings = 260
synth_extent = 1100
ensemble_members = 3
grid_max_depths = 3
grid_rounds = 15
learning_rate = 0.25
min_tier_samples = 40
"""


@pytest.fixture(scope="session")
def small_city(tmp_path_factory):
    """One fully-run small pipeline shared by pipeline/audit tests."""
    workdir = tmp_path_factory.mktemp("smallcity")
    cfg = parse_config(SMALL_CITY_CONFIG + f"\nworkdir = {workdir}\n")
    for stage in STAGES:
        run_stage(cfg, stage)
    return cfg
