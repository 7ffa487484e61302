from __future__ import annotations

from pathlib import Path

import pytest

from ellgen.modelfile import parse_model
from ellgen.suite import fixture_path

HERE = Path(__file__).parent


@pytest.fixture
def load():
    def _load(name: str):
        return parse_model(fixture_path(name))

    return _load


@pytest.fixture
def local_fixture():
    def _path(name: str) -> Path:
        return HERE / "fixtures" / name

    return _path
