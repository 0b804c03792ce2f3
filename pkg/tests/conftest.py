import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pipeyield import GateInstance, PipelineModel, StageModel, VariationSpec  # noqa: E402


def synthetic_stage(n, p, q, a, seed, position, latch=10.0, upper=8.0):
    """Stage of ``n`` gates with parameters jittered around (p, q, a)."""
    rng = np.random.default_rng(seed)
    gates = tuple(
        GateInstance(p * rng.uniform(0.7, 1.3), q * rng.uniform(0.5, 1.5),
                     a * rng.uniform(0.5, 1.5), 1.0, 1.0, upper)
        for _ in range(n)
    )
    return StageModel(gates, latch, position)


def four_stage_benchmark(variation=None, first_upper=8.0):
    """Heterogeneous 4-stage pipeline with 40, 25, 15 and 10 gates."""
    v = variation or VariationSpec.mixed(0.15, corr_length=2.0)
    return PipelineModel((
        synthetic_stage(40, 1.0, 4.0, 1.0, 1, 0, upper=first_upper),
        synthetic_stage(25, 1.5, 6.5, 2.0, 2, 1),
        synthetic_stage(15, 3.0, 10.0, 0.5, 3, 2),
        synthetic_stage(10, 4.0, 16.0, 3.0, 4, 3),
    ), v)


def three_stage_benchmark(variation=None):
    v = variation or VariationSpec.mixed(0.15, corr_length=2.0)
    return PipelineModel((
        synthetic_stage(30, 1.0, 5.0, 1.0, 11, 0),
        synthetic_stage(20, 2.0, 8.0, 4.0, 12, 1),
        synthetic_stage(12, 3.0, 12.0, 0.5, 13, 2),
    ), v)


@pytest.fixture
def bench4():
    return four_stage_benchmark()


@pytest.fixture
def bench3():
    return three_stage_benchmark()


# ------------------------------------------------------ acceptance summary

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")


@pytest.fixture
def measured(request):
    """List the test appends measured values to; echoed in the terminal summary."""
    number, title = request.node.get_closest_marker("criterion").args
    lines = []
    _CRITERIA[request.node.nodeid] = {"number": number, "title": title, "lines": lines, "outcome": None}
    return lines


def pytest_runtest_logreport(report):
    entry = _CRITERIA.get(report.nodeid)
    if entry is not None and (report.when == "call" or report.failed):
        entry["outcome"] = entry["outcome"] if entry["outcome"] == "failed" else report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    grouped = {}
    for nodeid, entry in _CRITERIA.items():
        grouped.setdefault((entry["number"], entry["title"]), []).append((nodeid, entry))
    for (number, title), entries in sorted(grouped.items()):
        verdict = "PASS" if all(e["outcome"] == "passed" for _, e in entries) else "FAIL"
        tr.write_line(f"criterion {number}: {verdict}  {title}")
        for nodeid, entry in entries:
            case = nodeid.partition("[")[2].rstrip("]")
            for line in entry["lines"]:
                tr.write_line(f"    {case + ': ' if case else ''}{line}")
