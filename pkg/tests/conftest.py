import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from adhocsep.corpus import SyntheticCorpus
from adhocsep.room import mix_scenario, sample_scenario

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def small_record():
    """A 4-microphone, 1.5 s scenario rendered once per session."""
    corpus = SyntheticCorpus(seed=3, duration=1.5)
    scen = sample_scenario(11, num_mics=4)
    return mix_scenario(corpus.utterance(0).wave, corpus.utterance(1).wave, scen)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import acceptance_report

    if acceptance_report.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_report.LINES):
            terminalreporter.write_line(line)
