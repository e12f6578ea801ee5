import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rfqlab import pipeline
from rfqlab.features import compute_features
from rfqlab.market_sim import SimConfig, gen_rfq_dataset

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def default_records():
    return gen_rfq_dataset(SimConfig())


@pytest.fixture(scope="session")
def default_table(default_records):
    return compute_features(default_records)


@pytest.fixture(scope="session")
def default_split(default_table):
    usable = pipeline.usable_rows(default_table)
    return pipeline.chronological_split(usable, 0.3)


@pytest.fixture(scope="session")
def lasso_classifier(default_split):
    train, _ = default_split
    return pipeline.fit_lasso_classifier(train, lam=0.001)


@pytest.fixture(scope="session")
def next_mid_model(default_split):
    train, _ = default_split
    return pipeline.fit_next_mid_model(train)


@pytest.fixture(scope="session")
def golden_dir():
    return GOLDEN_DIR
