from __future__ import annotations

from collections.abc import Generator
from typing import Any

import pytest
from sqlalchemy import Column, Integer, MetaData, Table, inspect
from sqlalchemy.engine import Engine
from sqlalchemy.pool import StaticPool

from asphalt.distmc.store import ResultStore, clear_store, create_store_engine


def make_document(command: str, value: Any = 2.0) -> dict[str, Any]:
    return {
        "schema": 1,
        "command": command,
        "model": "routes",
        "query": "R{E,cost}min=? [ F goal ]",
        "value": value,
        "forward": {"bounds": [1.5, "inf"]},
    }


@pytest.fixture
def store(store_engine: Engine) -> Generator[ResultStore, Any, None]:
    yield ResultStore(store_engine)
    clear_store(store_engine)


def test_save_and_get(store: ResultStore) -> None:
    document = make_document("optimize")
    run_id = store.save(document)
    record = store.get(run_id)
    assert record.command == "optimize"
    assert record.model == "routes"
    assert record.value == 2.0
    assert record.schema == 1
    assert record.created_at is not None
    assert record.document == document


def test_save_non_numeric_value(store: ResultStore) -> None:
    record = store.get(store.save(make_document("check", "inf")))
    assert record.value is None
    assert record.document["value"] == "inf"


def test_get_missing(store: ResultStore) -> None:
    with pytest.raises(KeyError):
        store.get(12345)


def test_runs(store: ResultStore) -> None:
    first = store.save(make_document("check"))
    second = store.save(make_document("optimize"))
    third = store.save(make_document("check"))
    assert [record.id for record in store.runs()] == [first, second, third]
    assert [record.id for record in store.runs("check")] == [first, third]
    assert store.runs("evaluate") == []


def test_clear_store(store_engine: Engine) -> None:
    metadata = MetaData()
    notes = Table("notes", metadata, Column("id", Integer, primary_key=True))
    metadata.create_all(store_engine)
    try:
        ResultStore(store_engine).save(make_document("check"))
        assert sorted(inspect(store_engine).get_table_names()) == ["notes", "runs"]
        clear_store(store_engine)
        assert inspect(store_engine).get_table_names() == ["notes"]
    finally:
        notes.drop(store_engine)


@pytest.mark.parametrize(
    "url",
    [
        pytest.param("sqlite:///:memory:", id="string"),
        pytest.param({"drivername": "sqlite"}, id="dict"),
    ],
)
def test_memory_engine(url: str | dict[str, Any]) -> None:
    engine = create_store_engine(url)
    try:
        assert engine.dialect.name == "sqlite"
        assert isinstance(engine.pool, StaticPool)
    finally:
        engine.dispose()


def test_file_engine(sqlite_file_engine: Engine) -> None:
    assert not isinstance(sqlite_file_engine.pool, StaticPool)
