from __future__ import annotations

from collections.abc import Generator
from pathlib import Path
from typing import Any, cast

import numpy as np
import pytest
from _pytest.fixtures import SubRequest
from pytest import TempPathFactory
from pytest_lazy_fixtures import lf
from sqlalchemy.engine import Engine

from asphalt.distmc.ingest import write_model
from asphalt.distmc.models import Dtmc, Mdp, RewardStructure
from asphalt.distmc.store import create_store_engine


@pytest.fixture(scope="session")
def anyio_backend() -> str:
    return "asyncio"


@pytest.fixture
def geometric_dtmc() -> Dtmc:
    # state 0 retries with probability 1/2, state 1 is the goal
    return Dtmc.from_rows([[(0, 0.5), (1, 0.5)], [(1, 1.0)]], 0, {"goal": [1]})


@pytest.fixture
def geometric_rewards() -> RewardStructure:
    return RewardStructure(np.array([1, 0]), "cost")


@pytest.fixture
def two_route_mdp() -> Mdp:
    """
    State 0 either goes the risky way (cost 1, but 10 more with probability 0.1) or the
    safe way (cost 3). State 2 is the goal.
    """
    return Mdp.from_choices(
        [
            [("risky", [(2, 0.9), (1, 0.1)]), ("safe", [(2, 1.0)])],
            [("detour", [(2, 1.0)])],
            [("stay", [(2, 1.0)])],
        ],
        0,
        {"goal": [2]},
    )


@pytest.fixture
def two_route_rewards() -> RewardStructure:
    return RewardStructure(np.array([1, 3, 10, 0]), "cost")


@pytest.fixture
def dtmc_stem(
    tmp_path: Path, geometric_dtmc: Dtmc, geometric_rewards: RewardStructure
) -> Path:
    stem = tmp_path / "geometric"
    write_model(geometric_dtmc, {"cost": geometric_rewards}, stem)
    return stem


@pytest.fixture
def mdp_stem(
    tmp_path: Path, two_route_mdp: Mdp, two_route_rewards: RewardStructure
) -> Path:
    stem = tmp_path / "routes"
    write_model(two_route_mdp, {"cost": two_route_rewards}, stem)
    return stem


@pytest.fixture(scope="session")
def sqlite_memory_engine() -> Generator[Engine, Any, None]:
    engine = create_store_engine("sqlite:///:memory:")
    yield engine
    engine.dispose()


@pytest.fixture(scope="session")
def sqlite_file_engine(
    tmp_path_factory: TempPathFactory,
) -> Generator[Engine, Any, None]:
    db_path = tmp_path_factory.mktemp("asphalt-distmc") / "runs.db"
    engine = create_store_engine(f"sqlite:///{db_path}")
    yield engine
    engine.dispose()
    if db_path.exists():
        db_path.unlink()


@pytest.fixture(
    params=[lf("sqlite_memory_engine"), lf("sqlite_file_engine")], scope="session"
)
def store_engine(request: SubRequest) -> Engine:
    return cast(Engine, request.param)
