import re

import numpy as np
import pytest

from hrhmm import synth
from hrhmm.model import build_design

_CRITERIA: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        detail = ""
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2]
        _CRITERIA[m.group(1)] = (f"{m.group(2)}", f"{outcome}" + (f" ({detail})" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA, key=int):
        name, outcome = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num} [{name}]: {outcome}")


@pytest.fixture(scope="session")
def small_truth():
    rng = np.random.default_rng(123)
    return synth.default_true_params(rng, n_players=40, n_seasons=5)


@pytest.fixture(scope="session")
def small_data(small_truth):
    d, elite = synth.simulate(small_truth, np.random.default_rng(7))
    return d, elite


@pytest.fixture(scope="session")
def small_design(small_data, small_truth):
    d, _ = small_data
    return build_design(d, small_truth.hyper)


@pytest.fixture
def write_csv(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return p
    return _write
