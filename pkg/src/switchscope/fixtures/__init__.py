"""Bundled example systems."""

from importlib import resources
from pathlib import Path

__all__ = ["fixture_path", "fixture_names"]


def fixture_names() -> list[str]:
    root = resources.files(__package__)
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def fixture_path(name: str) -> Path:
    """Filesystem path of a bundled system document (without .json suffix)."""
    candidate = resources.files(__package__) / f"{name}.json"
    with resources.as_file(candidate) as path:
        if not path.exists():
            raise FileNotFoundError(f"no bundled fixture named {name!r}")
        return Path(path)
