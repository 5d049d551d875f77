import json
import sys
from pathlib import Path

import pytest

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

from fsobackhaul.instance import build_potential_graph, read_instance  # noqa: E402

FIXTURES = HERE / "fixtures"
GOLDEN = HERE / "golden"


def fixture_instance(suite: str, name: str):
    return read_instance(FIXTURES / suite / f"{name}.json")


def fixture_names(suite: str):
    return sorted(p.stem for p in (FIXTURES / suite).glob("*.json"))


def golden_json(name: str):
    return json.loads((GOLDEN / name).read_text(encoding="utf-8"))


@pytest.fixture
def hand():
    """Loader for the hand-built fixtures: ``hand("revisit") -> (instance, graph)``."""
    def load(name):
        inst = fixture_instance("hand", name)
        return inst, build_potential_graph(inst)
    return load


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
