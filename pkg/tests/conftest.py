import numpy as np
import pytest

from nids_xray.adapters import train_adapter
from nids_xray.features.extract import extract_features
from nids_xray.synthetic import synth_trace
from nids_xray.tamper import default_train_rows, parse_match

# One modest trace shared by the expensive integration-style tests: 120 s
# of ~40 pps benign traffic with a 2 s 800 pps flood near the end.
SMALL_TRACE_KW = dict(
    seed=0,
    benign_seconds=120.0,
    benign_pps=40.0,
    flood_start=100.0,
    flood_seconds=2.0,
    flood_pps=800.0,
)


@pytest.fixture(scope="session")
def small_trace():
    return synth_trace(**SMALL_TRACE_KW)


@pytest.fixture(scope="session")
def small_features(small_trace):
    return extract_features(small_trace)


@pytest.fixture(scope="session")
def small_train_rows(small_trace):
    return default_train_rows(small_trace, parse_match("label=malicious"))


@pytest.fixture(scope="session")
def reference_adapter(small_features, small_train_rows):
    return train_adapter("reference", small_features, small_train_rows, seed=0)


@pytest.fixture(scope="session")
def rate_blind_adapter(small_features, small_train_rows):
    return train_adapter("rate_blind", small_features, small_train_rows, seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
