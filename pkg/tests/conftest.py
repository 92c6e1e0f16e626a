import numpy as np
import pytest

from kqislice.config import RunConfig
from kqislice.core import KpiVector, KqiVector, RadioConditions, TrainingRow
from kqislice.pipeline import train_registry
from kqislice.sea import execute_campaign

CATALOG = RunConfig().catalog


@pytest.fixture(scope="session")
def reference_config() -> RunConfig:
    return RunConfig()


@pytest.fixture(scope="session")
def reference_rows(reference_config):
    return execute_campaign(reference_config.plan(), reference_config.simulator())


@pytest.fixture(scope="session")
def reference_run(reference_rows, reference_config):
    """Registry selected on the 70% split of the pinned reference campaign."""
    return train_registry(reference_rows, reference_config)


@pytest.fixture(scope="session")
def reference_registry(reference_run):
    return reference_run.registry


def make_row(rng: np.random.Generator, t: float = 0.0) -> TrainingRow:
    """Random but valid training row, for model and persistence tests."""
    shares = rng.dirichlet(np.ones(4))
    shares[-1] = 1.0 - shares[:3].sum()
    shares = np.clip(shares, 0.0, 1.0)
    return TrainingRow(
        station_id=int(rng.integers(0, 4)),
        config=CATALOG[int(rng.integers(0, len(CATALOG)))],
        radio=RadioConditions(
            float(rng.uniform(-120, -70)), float(rng.uniform(-20, -5)), float(rng.uniform(-100, -40))
        ),
        kpi=KpiVector(float(rng.uniform(0, 60)), float(rng.uniform(-5, 30))),
        kqi=KqiVector(
            float(rng.uniform(0.1, 5)),
            float(rng.uniform(0.5, 8)),
            float(shares[0]),
            float(shares[1]),
            float(shares[2]),
            float(shares[3]),
            int(rng.integers(0, 3)),
            float(rng.uniform(0, 2)),
        ),
        timestamp=t,
    )


@pytest.fixture
def random_rows():
    rng = np.random.default_rng(7)
    return [make_row(rng, float(i)) for i in range(60)]


# Acceptance reporting: tests marked ``criterion(n, "title")`` roll up into one line per criterion.
_criteria: dict[int, dict] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    n, title = marker
    entry = _criteria.setdefault(n, {"title": title, "failed": [], "ran": 0})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry["ran"] += 1
        if report.outcome == "failed":
            entry["failed"].append(report.nodeid.split("::")[-1])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result()._criterion = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        entry = _criteria[n]
        status = "FAIL" if entry["failed"] else "PASS"
        line = f"criterion {n}: {status}  {entry['title']}"
        if entry["failed"]:
            line += f"  (failed: {', '.join(entry['failed'])})"
        terminalreporter.write_line(line)
