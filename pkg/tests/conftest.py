import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))


@pytest.fixture
def results_dir(tmp_path, monkeypatch):
    """Point the default results root at a temporary directory."""

    root = tmp_path / "results"
    monkeypatch.setenv("RESULTS_DIR", str(root))
    return root
