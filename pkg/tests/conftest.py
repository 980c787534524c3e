import shutil
from pathlib import Path

import pytest

from ilp_forge.model import Project
from ilp_forge.parser import parse_document
from ilp_forge.project import load_config, load_project

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
PROJECT_FIXTURES = sorted(p.name for p in FIXTURES.iterdir() if (p / "ilp.json").is_file())


def load_fixture(name: str) -> Project:
    return load_project(load_config(FIXTURES / name))


def project_of(*docs: tuple[str, str]) -> Project:
    """Build an in-memory project from (path, text) pairs."""
    return Project(tuple(parse_document(p, t) for p, t in docs), None)


@pytest.fixture
def fixture_copy(tmp_path):
    """Copy a fixture directory into tmp_path and return the new root."""

    def copy(name: str) -> Path:
        dest = tmp_path / name
        shutil.copytree(FIXTURES / name, dest)
        return dest

    return copy
