"""Accessors for the bundled 20-doc toy dataset used by the demo pipeline
and the end-to-end tests."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def toy_dir() -> Path:
    return Path(str(resources.files("chiq").joinpath("data/toy")))


def toy_path(name: str) -> Path:
    """One of collection.tsv, sessions.jsonl, qrels.txt, mock_rules.json."""
    path = toy_dir() / name
    if not path.exists():
        raise FileNotFoundError(f"no toy data file named {name!r}")
    return path
