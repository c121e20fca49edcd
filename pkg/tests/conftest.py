from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from make_goldens import (  # noqa: E402
    FIXTURES,
    build_golden_engine,
    golden_config_yaml,
    load_script,
    train_fixture_router,
)


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def golden_workdir(tmp_path_factory) -> Path:
    """One shared directory holding the deterministically trained router."""
    work = tmp_path_factory.mktemp("golden")
    train_fixture_router(work / "router.bin")
    return work


@pytest.fixture()
def engine(golden_workdir):
    """A fresh engine per test (session state must not leak between tests)."""
    return build_golden_engine(golden_workdir)


@pytest.fixture(scope="session")
def config_path(golden_workdir) -> Path:
    return golden_config_yaml(golden_workdir)


@pytest.fixture(scope="session")
def script() -> list[str]:
    return load_script()
