from __future__ import annotations

from pathlib import Path

import pytest

from migrata.metamodel import load_metamodel
from migrata.plans import builtin_metamodel_path
from migrata.xmi import read_resource_set

FIXTURES = Path(__file__).parent / "fixtures"
GRAPH10 = FIXTURES / "graph10"
EXPECTED21 = FIXTURES / "expected21"
MAP = FIXTURES / "map"
METAMODELS = FIXTURES / "metamodels"

# every 1.0 graph fixture, as the list of files making up one resource set
GRAPH_FIXTURES = {
    "empty": [GRAPH10 / "empty.gmfgraph"],
    "single": [GRAPH10 / "single.gmfgraph"],
    "statemachine": [GRAPH10 / "statemachine.gmfgraph"],
    "multi": [GRAPH10 / "multi" / "a.gmfgraph", GRAPH10 / "multi" / "b.gmfgraph"],
    "deep": [GRAPH10 / "deep.gmfgraph"],
}


@pytest.fixture(scope="session")
def mm10():
    return load_metamodel(builtin_metamodel_path("gmfgraph-1.0"))


@pytest.fixture(scope="session")
def mm21():
    return load_metamodel(builtin_metamodel_path("gmfgraph-2.1"))


@pytest.fixture(scope="session")
def map_mms():
    return [load_metamodel(builtin_metamodel_path(k)) for k in ("gmfmap-1.0", "gmfmap-2.0", "gmfmap-2.1")]


@pytest.fixture
def read10(mm10):
    def read(name):
        return read_resource_set(GRAPH_FIXTURES[name], [mm10])
    return read


@pytest.fixture
def statemachine(read10):
    return read10("statemachine")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
