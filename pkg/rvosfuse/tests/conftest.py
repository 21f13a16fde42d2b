import matplotlib
matplotlib.use('Agg')

import numpy as np
import pytest

from rvosfuse import MaskSequence, PipelineConfig
from rvosfuse.tests.helpers import synthetic_corpus, two_candidate_scene

@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for randomized suites"""
    return np.random.default_rng(20240607)

@pytest.fixture
def scene() -> tuple[MaskSequence, list[MaskSequence]]:
    """Prediction and two candidates on an 8x8 grid"""
    return two_candidate_scene()

@pytest.fixture
def corpus(tmp_path):
    """Synthetic 3-video prediction/candidate corpus on disk"""
    return synthetic_corpus(tmp_path / 'corpus')

@pytest.fixture
def pipeline_config(tmp_path) -> PipelineConfig:
    """Config writing into a temporary output directory"""
    return PipelineConfig(out = str(tmp_path / 'out'))

@pytest.fixture(autouse = True)
def no_log_env(monkeypatch):
    """Keeps RVOSFUSE_LOG from the calling shell out of the tests"""
    monkeypatch.delenv('RVOSFUSE_LOG', raising = False)
