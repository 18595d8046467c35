from __future__ import annotations

import logging
from collections.abc import AsyncGenerator, Callable
from concurrent.futures import ThreadPoolExecutor
from inspect import isawaitable
from typing import Any, Literal, Optional

from asphalt.core import Component, Context, context_teardown, resolve_reference
from sqlalchemy.engine import Engine
from sqlalchemy.engine.url import URL

from asphalt.distmc.checker import ModelChecker, RunConfig
from asphalt.distmc.distributions import Kind
from asphalt.distmc.store import ResultStore, create_store_engine

logger = logging.getLogger(__name__)


class ModelCheckerComponent(Component):
    """
    Publishes a :class:`~asphalt.distmc.checker.ModelChecker` as a resource.

    Runs started with :meth:`~asphalt.distmc.checker.ModelChecker.run_async` are executed
    in a thread pool owned by the component. If ``store`` is given, a
    :class:`~asphalt.distmc.store.ResultStore` is published as well and every result is
    saved in it.

    :param representation: ``categorical`` or ``quantile``
    :param atoms: number of atoms of the approximate representation
    :param vmin: lowest atom
    :param vmax: highest atom (default: the model's suggestion, or 100)
    :param forward_accuracy: accuracy of the exact DTMC computation
    :param convergence: convergence threshold of distributional value iteration
    :param budget_atoms: number of budget atoms for CVaR optimization
    :param alpha: default risk level
    :param max_iterations: cap on value iteration sweeps
    :param freeze_after: window of sweeps without a new smallest residual after which the
        policy is frozen
    :param method: ``dvi`` or ``vi``
    :param store: the connection URL of the result store (can also be a dictionary of
        :class:`~sqlalchemy.engine.url.URL` keyword arguments)
    :param worker_threads: maximum number of worker threads running model checking jobs
    :param ready_callback: a callable that is called with the model checker right before
        the resources are added to the context (can be a coroutine function too)
    :param resource_name: name space for the resources
    """

    executor: ThreadPoolExecutor

    def __init__(
        self,
        *,
        representation: Kind = "categorical",
        atoms: int = 201,
        vmin: float = 0.0,
        vmax: Optional[float] = None,
        forward_accuracy: float = 1e-5,
        convergence: float = 0.01,
        budget_atoms: Optional[int] = None,
        alpha: float = 0.7,
        max_iterations: int = 10_000,
        freeze_after: int = 1_000,
        method: Literal["dvi", "vi"] = "dvi",
        store: str | URL | dict[str, Any] | None = None,
        worker_threads: int = 2,
        ready_callback: Callable[[ModelChecker], Any] | str | None = None,
        resource_name: str = "default",
    ):
        self.resource_name = resource_name
        self.worker_threads = worker_threads
        self.ready_callback = resolve_reference(ready_callback)
        self.config = RunConfig(
            representation=representation,
            atoms=atoms,
            vmin=vmin,
            vmax=vmax,
            forward_accuracy=forward_accuracy,
            convergence=convergence,
            budget_atoms=budget_atoms,
            alpha=alpha,
            max_iterations=max_iterations,
            freeze_after=freeze_after,
            method=method,
        )
        self.engine: Engine | None = None
        if store is not None:
            self.engine = create_store_engine(store)

    @context_teardown
    async def start(self, ctx: Context) -> AsyncGenerator[None, Exception | None]:
        self.executor = ThreadPoolExecutor(self.worker_threads)
        ctx.add_teardown_callback(self.executor.shutdown)

        store: ResultStore | None = None
        if self.engine is not None:
            store = ResultStore(self.engine)

        checker = ModelChecker(self.config, store=store, executor=self.executor)
        if self.ready_callback:
            retval = self.ready_callback(checker)
            if isawaitable(retval):
                await retval

        ctx.add_resource(checker, self.resource_name)
        if store is not None:
            ctx.add_resource(store, self.resource_name)

        logger.info(
            "Configured model checker resources (%s; representation=%s, atoms=%d, store=%s)",
            self.resource_name,
            self.config.representation,
            self.config.atoms,
            self.engine.dialect.name if self.engine is not None else "none",
        )

        yield

        if self.engine is not None:
            self.engine.dispose()

        logger.info("Model checker resources (%s) shut down", self.resource_name)
