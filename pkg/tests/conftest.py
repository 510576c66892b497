from __future__ import annotations

from pathlib import Path

import pytest

from treecontrib.ingest import load_csv, parse_pmml

FIXTURES = Path(__file__).parent / "fixtures"

# Lands on leaf 14 via 0 -> 2 -> 5 -> 9 -> 14 in the worked-example tree.
WORKED_INSTANCE = (0.0, 2.0, 0.0, 7.0, 1.0)

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def worked_pmml() -> str:
    return (FIXTURES / "worked_tree.pmml").read_text()


@pytest.fixture(scope="session")
def worked_ensemble(worked_pmml):
    return parse_pmml(worked_pmml)


@pytest.fixture(scope="session")
def worked_data(worked_ensemble):
    text = (FIXTURES / "worked_routing.csv").read_text()
    return load_csv(text, "label").aligned_to(worked_ensemble.catalog)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
