from __future__ import annotations

import numpy as np
import pytest

from gkn.data import compute_normalization, generate_darcy, grid_samples


@pytest.fixture(scope="session")
def small_dataset():
    """Twelve Darcy pairs at s=31 (downsamples to 16)."""
    return generate_darcy(12, 31, seed=11)


@pytest.fixture(scope="session")
def small_samples(small_dataset):
    ch = small_dataset.at_resolution(16, np.arange(8))
    stats = compute_normalization(ch)
    return grid_samples(ch, stats), stats


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion that ran."""
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])
