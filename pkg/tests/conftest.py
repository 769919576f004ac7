import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from spgc.data import save_dataset, synthetic_bundle  # noqa: E402
from spgc.graph import Graph  # noqa: E402


@pytest.fixture(scope="session")
def bundle():
    return synthetic_bundle(n=120, c=6, n_classes=3, seed=3, p_in=0.1, p_out=0.01,
                            split=(8, 30, 50))


@pytest.fixture()
def bundle_dir(tmp_path, bundle):
    path = tmp_path / "bundle"
    save_dataset(bundle, path)
    return path


@pytest.fixture()
def triangle():
    x = np.arange(6, dtype=float).reshape(3, 2)
    return Graph(3, [(0, 1), (1, 2), (2, 0)], x, np.array([0, 1, 0]))


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("SPGC_CACHE_DIR", str(tmp_path / "cache"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
