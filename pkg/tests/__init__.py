"""Tests for qrecords."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any


def load_fixture(filename: str) -> str:
    """Load a fixture."""
    path = Path(__package__) / "fixtures" / filename
    return path.read_text(encoding="utf-8")


def fixture_path(filename: str) -> Path:
    """Return the path of a fixture."""
    return Path(__package__) / "fixtures" / filename


def load_scenario(filename: str) -> Any:
    """Load a scenario fixture as a JSON document."""
    return json.loads(load_fixture(filename))
