import sys

import pytest

from thermforge.cli import cmd_synth
from thermforge.config import PipelineConfig


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Six synthetic scenes plus two decoy frames, generated once per session."""
    out = tmp_path_factory.mktemp("corpus")
    assert cmd_synth(PipelineConfig(seed=11), out, count=6, decoys=2) == 0
    return out


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        passed, line = results[key]
        terminalreporter.write_line(f"{key} {'PASS' if passed else 'FAIL'}  {line}")
