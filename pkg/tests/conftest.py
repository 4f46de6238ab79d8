import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mmseeker.core import FusionWeights, SequenceStore

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def equal_fw():
    return FusionWeights.from_gamma([0.25, 0.25, 0.25, 0.25])


@pytest.fixture
def small_store(rng):
    return SequenceStore(rng.normal(size=(100, 4, 8)).astype(np.float32))


_VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """``verdict(n, ok, detail)`` prints and records one line per acceptance criterion."""
    store = request.config.stash.setdefault(_VERDICTS, {})
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def record(n: int, ok: bool, detail: str):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
        store[n] = line
        with capman.global_and_fixture_disabled():
            print(f"\n{line}", flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
