import json
from importlib.resources import files
from pathlib import Path

import pytest


@pytest.fixture(scope="session")
def data_dir() -> Path:
    """Directory of packaged fixture documents (real files in this layout)."""
    return Path(str(files("topomap.data")))


@pytest.fixture(scope="session")
def reference_doc(data_dir) -> str:
    return (data_dir / "reference_graph.json").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def reference_json(reference_doc) -> dict:
    return json.loads(reference_doc)
