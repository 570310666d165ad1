import numpy as np
import pytest

from redcal import synthetic as syn
from redcal.ensembles import exclude_unrealistic_runs


@pytest.fixture(scope="session")
def tiny_config():
    return syn.SyntheticConfig(
        design_levels=3, n_times=101, grid_rows=10, grid_cols=7, seed=0
    )


@pytest.fixture(scope="session")
def tiny_bundle(tiny_config):
    return syn.generate_ensemble(tiny_config)


@pytest.fixture(scope="session")
def tiny_retained(tiny_bundle, tiny_config):
    retained, _ = exclude_unrealistic_runs(
        tiny_bundle.series,
        tiny_config.exclude_threshold,
        tiny_config.exclude_cutoff,
    )
    return retained


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
