import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from blotforensics.dataset import load_manifest  # noqa: E402
from blotforensics.smoke import FAKE_KINDS, make_smoke_dataset  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def smoke_dir(tmp_path_factory):
    """20 real patches (one per source) and 20 fakes for each of four generators."""
    root = tmp_path_factory.mktemp("smoke")
    make_smoke_dataset(root, generators=tuple(FAKE_KINDS), seed=0)
    return root


@pytest.fixture(scope="session")
def smoke_manifest(smoke_dir):
    return load_manifest(smoke_dir / "manifest.jsonl")


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    def record(number, ok, text, status=None):
        line = f"[{number:>2}] {status or ('PASS' if ok else 'FAIL')}  {text}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s[1:3])):
            terminalreporter.write_line(line)
