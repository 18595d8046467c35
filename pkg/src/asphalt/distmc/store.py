from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from datetime import datetime, timezone
from typing import Any, Optional

from sqlalchemy import DateTime, Float, Integer, String, Text, select
from sqlalchemy.engine import Connection, Engine, create_engine
from sqlalchemy.engine.url import URL, make_url
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column, sessionmaker
from sqlalchemy.pool import StaticPool

logger = logging.getLogger(__name__)


class Base(DeclarativeBase):
    pass


class RunRecord(Base):
    """One stored model checking run."""

    __tablename__ = "runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    created_at: Mapped[datetime] = mapped_column(
        DateTime(timezone=True), default=lambda: datetime.now(timezone.utc)
    )
    command: Mapped[str] = mapped_column(String(20))
    model: Mapped[str] = mapped_column(String(200))
    query: Mapped[str] = mapped_column(Text)
    value: Mapped[Optional[float]] = mapped_column(Float, nullable=True)
    schema: Mapped[int] = mapped_column(Integer)
    result: Mapped[str] = mapped_column(Text)

    @property
    def document(self) -> dict[str, Any]:
        return json.loads(self.result)


def create_store_engine(url: str | URL | dict[str, Any]) -> Engine:
    """
    Create an engine for a result store.

    :param url: a connection URL, or a dictionary of :class:`~sqlalchemy.engine.url.URL`
        keyword arguments

    """
    if isinstance(url, dict):
        url = URL.create(**url)
    elif isinstance(url, str):
        url = make_url(url)

    kwargs: dict[str, Any] = {}
    # Runs are executed in worker threads, one at a time per connection
    if url.get_dialect().name == "sqlite":
        kwargs["connect_args"] = {"check_same_thread": False}
        # every thread must see the same in-memory database
        if url.database in (None, "", ":memory:"):
            kwargs["poolclass"] = StaticPool

    return create_engine(url, **kwargs)


class ResultStore:
    """
    Persists run results (the result JSON documents) in a relational database.

    :param engine: the engine to use; the ``runs`` table is created if missing
    """

    def __init__(self, engine: Engine):
        self.engine = engine
        self._sessionmaker = sessionmaker(bind=engine, expire_on_commit=False)
        Base.metadata.create_all(engine)

    def save(self, document: Mapping[str, Any]) -> int:
        """
        Store a result document.

        :param document: a document as produced by
            :meth:`~asphalt.distmc.checker.RunResult.to_json`
        :return: the id of the new record

        """
        value = document.get("value")
        record = RunRecord(
            command=str(document.get("command", "")),
            model=str(document.get("model", "")),
            query=str(document.get("query", "")),
            value=value if isinstance(value, (int, float)) else None,
            schema=int(document.get("schema", 1)),
            result=json.dumps(document, sort_keys=True),
        )
        with self._sessionmaker.begin() as session:
            session.add(record)
            session.flush()
            run_id = record.id

        logger.debug("Stored run %d (%s)", run_id, record.query)
        return run_id

    def get(self, run_id: int) -> RunRecord:
        """
        Return a stored run.

        :raises KeyError: if there is no run with the given id

        """
        with self._sessionmaker() as session:
            record = session.get(RunRecord, run_id)

        if record is None:
            raise KeyError(run_id)

        return record

    def runs(self, command: str | None = None) -> list[RunRecord]:
        """Return the stored runs in insertion order, optionally only for one command."""
        statement = select(RunRecord).order_by(RunRecord.id)
        if command is not None:
            statement = statement.where(RunRecord.command == command)

        with self._sessionmaker() as session:
            return list(session.scalars(statement))


def clear_store(engine: Engine | Connection) -> None:
    """
    Drop the ``runs`` table. Other tables in the same database are left alone.

    :param engine: the engine or connection to use

    """
    Base.metadata.drop_all(engine)
    logger.debug("Dropped the result store tables")
