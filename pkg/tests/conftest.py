import numpy as np
import pytest

from gridner.core import Entity, LabelSet, Sentence
from gridner.model import ModelConfig, init_params
from gridner.numerics import make_rng

SYMPTOM_TOKENS = ("I", "am", "having", "aching", "in", "legs", "and", "shoulders")


@pytest.fixture
def symptoms():
    ents = (Entity((3, 4, 5), "Symptom"), Entity((3, 4, 7), "Symptom"))
    return Sentence(SYMPTOM_TOKENS, ents), LabelSet(("Symptom",))


@pytest.fixture
def toy_config():
    return ModelConfig(vocab_size=12, relation_count=4, d_word=6, d_h=8, d_c=6, d_biaffine=5,
                       d_mlp=7, d_Ed=3, d_Et=2, dropout_p=0.0)


def perturbed_params(config, seed=0, scale=0.3):
    """Initial parameters plus noise, so no path through the network is trivially zero."""
    rng = make_rng(seed)
    params = init_params(config, rng)
    for t in params.values():
        t.data += rng.normal(0.0, scale, t.shape)
    return params


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
