"""
Run orchestration: configuration, the model checking pipeline, result documents and
sweeps.

A run goes through the stages ``parse`` → ``automaton`` → ``product`` → (``forward`` |
``dvi`` [→ ``evaluate``]) → ``statistic`` → ``report``. Every
:class:`~asphalt.distmc.exceptions.ModelCheckingError` raised along the way is tagged with
the stage it came from.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from asyncio import get_running_loop
from collections.abc import Iterator, Mapping, Sequence
from concurrent.futures import Executor
from contextlib import contextmanager
from contextvars import copy_context
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from io import StringIO
from pathlib import Path
from time import perf_counter
from typing import Any, Literal, Optional, Union, cast

import numpy as np

from asphalt.distmc.automata import Product, product_dtmc, product_mdp, to_dfa
from asphalt.distmc.benchmarks import BenchmarkSpec, generate
from asphalt.distmc.distributions import (
    Dist,
    Kind,
    ReprParams,
    Statistic,
    cramer_distance,
    mean,
    statistic,
    statistic_label,
    wasserstein_distance,
)
from asphalt.distmc.dvi import (
    DviResult,
    PolicyEvaluation,
    SlackGrid,
    ValueIterationResult,
    evaluate_policy,
    risk_neutral_dvi,
    risk_sensitive_dvi,
    value_iteration,
)
from asphalt.distmc.exceptions import (
    ModelCheckingError,
    NotAnOptimization,
    UnsupportedObjective,
)
from asphalt.distmc.forward import ForwardResult, forward_distribution
from asphalt.distmc.ingest import (
    ModelFiles,
    PathLike,
    distribution_document,
    parse_model,
    write_distribution,
    write_policy,
)
from asphalt.distmc.models import Dtmc, Mdp, Model, Policy, RewardStructure
from asphalt.distmc.query import Query, parse_query
from asphalt.distmc.store import ResultStore

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_VMAX = 100.0
DEFAULT_BUDGET_ATOMS = 101

Rewards = Union[RewardStructure, Mapping[str, RewardStructure]]


@dataclass(frozen=True)
class RunConfig:
    """
    Tunables of a model checking run.

    :param representation: ``categorical`` or ``quantile``
    :param atoms: number of atoms ``m`` of the approximate representation
    :param vmin: lowest categorical atom (and lowest budget)
    :param vmax: highest categorical atom (and highest budget); ``None`` takes the
        model's suggestion, or 100
    :param forward_accuracy: the accuracy ``ε`` of the exact DTMC computation
    :param convergence: the threshold ``ϵ`` on the change between value iteration sweeps
    :param budget_atoms: number of budget atoms of risk-sensitive runs; ``None`` takes the
        model's suggestion, or 101
    :param alpha: risk level used when a statistic needs one and the query does not give it
    :param max_iterations: cap on value iteration sweeps
    :param forward_max_iterations: cap on forward computation steps
    :param freeze_after: window of sweeps without a new smallest residual after which the
        policy is frozen
    :param method: ``dvi`` (distributional) or ``vi`` (scalar value iteration, ``E`` only)
    :param evaluate: evaluate optimized policies exactly on the induced DTMC
    :param seed: seed for randomized benchmark generators
    """

    representation: Kind = "categorical"
    atoms: int = 201
    vmin: float = 0.0
    vmax: Optional[float] = None
    forward_accuracy: float = 1e-5
    convergence: float = 0.01
    budget_atoms: Optional[int] = None
    alpha: float = 0.7
    max_iterations: int = 10_000
    forward_max_iterations: int = 10_000_000
    freeze_after: int = 1_000
    method: Literal["dvi", "vi"] = "dvi"
    evaluate: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.representation not in ("categorical", "quantile"):
            raise ValueError(f"unknown representation: {self.representation!r}")
        if self.method not in ("dvi", "vi"):
            raise ValueError(f"unknown method: {self.method!r}")
        if self.atoms < 2:
            raise ValueError("atoms must be at least 2")
        if self.budget_atoms is not None and self.budget_atoms < 2:
            raise ValueError("budget_atoms must be at least 2")
        if self.vmax is not None and not self.vmin < self.vmax:
            raise ValueError("vmin must be smaller than vmax")
        for name in ("forward_accuracy", "convergence", "alpha"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in the open interval (0, 1)")
        for name in ("max_iterations", "forward_max_iterations", "freeze_after"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def resolve_vmax(self, suggested: Optional[float] = None) -> float:
        if self.vmax is not None:
            return self.vmax

        vmax = suggested if suggested is not None else DEFAULT_VMAX
        return vmax if vmax > self.vmin else self.vmin + DEFAULT_VMAX

    def repr_params(self, suggested_vmax: Optional[float] = None) -> ReprParams:
        return ReprParams(
            self.representation, self.atoms, self.vmin, self.resolve_vmax(suggested_vmax)
        )

    def slack_grid(
        self, suggested_vmax: Optional[float] = None, suggested_atoms: Optional[int] = None
    ) -> SlackGrid:
        atoms = self.budget_atoms or suggested_atoms or DEFAULT_BUDGET_ATOMS
        return SlackGrid(self.vmin, self.resolve_vmax(suggested_vmax), atoms)


@dataclass(frozen=True, eq=False)
class LoadedModel:
    """
    A model together with its reward structures and the hints its source provides.

    :ivar name: how the model is named in result documents
    :ivar model: the DTMC or MDP
    :ivar rewards: reward structures by name
    :ivar vmax: suggested upper bound of the distribution support
    :ivar budget_atoms: suggested number of budget atoms
    :ivar formula: the benchmark's formula, if any
    """

    name: str
    model: Model
    rewards: Mapping[str, RewardStructure]
    vmax: Optional[float] = None
    budget_atoms: Optional[int] = None
    formula: Optional[str] = None


def load_files(
    stem: PathLike,
    kind: Literal["dtmc", "mdp"],
    reward_names: Sequence[str] = ("default",),
    *,
    renormalize: bool = False,
) -> LoadedModel:
    """Read a model from ``<stem>.tra``, ``<stem>.lab`` and its reward files."""
    with pipeline_stage("parse"):
        files = ModelFiles.from_stem(stem, tuple(reward_names))
        model, rewards = parse_model(files, kind, renormalize=renormalize)

    return LoadedModel(Path(stem).name, model, rewards)


def load_benchmark(spec: BenchmarkSpec) -> LoadedModel:
    """Generate one of the case-study MDPs."""
    with pipeline_stage("parse"):
        benchmark = generate(spec)

    name = spec.name if spec.size is None else f"{spec.name}-{spec.size}"
    return LoadedModel(
        name,
        benchmark.mdp,
        {benchmark.rewards.name: benchmark.rewards},
        benchmark.vmax,
        benchmark.budget_atoms,
        benchmark.formula,
    )


@contextmanager
def pipeline_stage(
    name: str, timings: Optional[dict[str, float]] = None
) -> Iterator[None]:
    """Attribute model checking errors raised in the block to the named stage."""
    started = perf_counter()
    try:
        yield
    except ModelCheckingError as exc:
        if exc.stage is None:
            exc.stage = name

        raise
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + perf_counter() - started


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(key): _jsonable(item) for key, item in value.items()}
    elif isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    elif isinstance(value, (bool, np.bool_)):
        return bool(value)
    elif isinstance(value, (int, np.integer)):
        return int(value)
    elif isinstance(value, (float, np.floating)):
        number = float(value)
        if math.isnan(number):
            return "nan"
        elif math.isinf(number):
            return "inf" if number > 0 else "-inf"

        return number

    return value


@dataclass(frozen=True, eq=False)
class PolicyExport:
    """A policy together with what is needed to write it in terms of model states."""

    policy: Policy
    mdp: Mdp
    states: np.ndarray
    automaton_states: Optional[np.ndarray] = None
    budgets: Optional[np.ndarray] = None

    def write(self, path: PathLike) -> None:
        write_policy(
            self.policy,
            self.mdp,
            path,
            states=self.states,
            automaton_states=self.automaton_states,
            budgets=self.budgets,
        )


@dataclass(frozen=True, eq=False)
class RunResult:
    """
    Outcome of one run.

    :ivar command: ``check``, ``optimize`` or ``evaluate``
    :ivar model_name: name of the model in the result document
    :ivar query: the query answered
    :ivar value: the value of the queried statistic
    :ivar distribution: the distribution the value was computed on
    :ivar config: the configuration of the run
    :ivar product: the model-automaton product
    :ivar forward: the exact forward computation (``check`` and ``evaluate``)
    :ivar dvi: the value iteration outcome (``optimize`` with ``dvi``)
    :ivar scalar: the scalar value iteration outcome (``optimize`` with ``vi``)
    :ivar evaluation: exact evaluation of the optimized policy
    :ivar policy: the optimized policy, ready for export
    :ivar timings: seconds spent per stage
    :ivar run_id: the id in the result store, if the result was stored
    """

    command: Literal["check", "optimize", "evaluate"]
    model_name: str
    query: Query
    value: float
    distribution: Dist
    config: RunConfig
    product: Product
    forward: Optional[ForwardResult] = None
    dvi: Optional[DviResult] = None
    scalar: Optional[ValueIterationResult] = None
    evaluation: Optional[PolicyEvaluation] = None
    policy: Optional[PolicyExport] = None
    timings: dict[str, float] = field(default_factory=dict)
    run_id: Optional[int] = None

    def to_json(self, *, timings: bool = False) -> dict[str, Any]:
        """
        Build the result document.

        Identical inputs and configuration give identical documents as long as timings
        are left out.
        """
        document: dict[str, Any] = {
            "schema": SCHEMA_VERSION,
            "command": self.command,
            "model": self.model_name,
            "query": str(self.query),
            "statistic": self.query.label,
            "value": self.value,
            "config": asdict(self.config),
            "product": {
                "states": self.product.model.num_states,
                "choices": (
                    self.product.model.num_choices
                    if isinstance(self.product.model, Mdp)
                    else self.product.model.num_states
                ),
                "automaton_states": self.product.dfa.num_states,
            },
            "distribution": distribution_document(self.distribution),
        }
        if self.forward is not None:
            document["forward"] = self._forward_document(self.forward)

        if self.dvi is not None:
            document["dvi"] = {
                "iterations": self.dvi.iterations,
                "residual": self.dvi.residual,
                "fallback": self.dvi.fallback,
                "overflow": self.dvi.overflow,
                "budget": self.dvi.budget,
            }

        if self.scalar is not None:
            document["vi"] = {"iterations": self.scalar.iterations}

        if self.evaluation is not None:
            document["evaluation"] = {
                "values": self.evaluation.values,
                "deviations": self.evaluation.deviations,
                **self._forward_document(self.evaluation.forward),
            }

        if timings:
            document["timings"] = self.timings

        return _jsonable(document)

    def _forward_document(self, forward: ForwardResult) -> dict[str, Any]:
        document: dict[str, Any] = {
            "iterations": forward.iterations,
            "residual": forward.residual,
            "pruned": forward.pruned,
        }
        if self.query.statistic in ("E", "VaR", "CVaR"):
            document["bounds"] = list(forward.bounds(self.query.statistic, self.query.alpha))

        return document


@dataclass(frozen=True)
class Sweep:
    """Rows of a parameter sweep, ready to be written as CSV."""

    columns: tuple[str, ...]
    rows: list[tuple[float, ...]]

    def column(self, name: str) -> list[float]:
        index = self.columns.index(name)
        return [row[index] for row in self.rows]

    def to_csv(self) -> str:
        stream = StringIO()
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(
            [repr(float(value)) if isinstance(value, float) else value for value in row]
            for row in self.rows
        )
        return stream.getvalue()

    def write(self, path: PathLike) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def _memory(product: Product) -> Optional[np.ndarray]:
    # the automaton column is only needed if decisions differ between its states
    if len(np.unique(product.state_map[~product.target, 1])) <= 1:
        return None

    return product.state_map[:, 1]


@dataclass(frozen=True, eq=False)
class _Solved:
    mdp: Mdp
    rewards: RewardStructure
    target: np.ndarray
    initial: int
    export: PolicyExport
    dvi: Optional[DviResult] = None
    scalar: Optional[ValueIterationResult] = None


def _select_rewards(rewards: Rewards, name: str) -> RewardStructure:
    if isinstance(rewards, RewardStructure):
        return rewards

    try:
        return rewards[name]
    except KeyError:
        raise UnsupportedObjective(
            f"the model has no reward structure named {name!r} "
            f"(available: {', '.join(sorted(rewards)) or 'none'})"
        ) from None


class ModelChecker:
    """
    Answers distributional queries on DTMCs and MDPs.

    :param config: the run configuration
    :param store: a result store every result is saved to
    :param executor: the executor :meth:`run_async` offloads runs to (the event loop's
        default executor if omitted)
    """

    def __init__(
        self,
        config: RunConfig | None = None,
        *,
        store: ResultStore | None = None,
        executor: Executor | None = None,
    ):
        self.config = config or RunConfig()
        self.store = store
        self.executor = executor

    def _product(
        self, model: Model, rewards: Rewards, query: Query, timings: dict[str, float]
    ) -> Product:
        with pipeline_stage("automaton", timings):
            dfa = to_dfa(query.formula)

        with pipeline_stage("product", timings):
            reward = _select_rewards(rewards, query.reward)
            if isinstance(model, Dtmc):
                product = product_dtmc(model, reward, dfa)
            else:
                product = product_mdp(model, reward, dfa)

        logger.info(
            "Built product with %d states (automaton: %d states)",
            product.model.num_states,
            dfa.num_states,
        )
        return product

    def check(
        self,
        dtmc: Dtmc,
        rewards: Rewards,
        query: Query,
        *,
        name: str = "model",
    ) -> RunResult:
        """
        Compute the exact reward distribution of a DTMC and the queried statistic on it.

        :param dtmc: the DTMC
        :param rewards: its reward structures (or the one structure to use)
        :param query: a non-optimizing query
        :param name: name of the model in the result document

        """
        timings: dict[str, float] = {}
        if query.is_optimization:
            raise UnsupportedObjective(
                "check answers statistic queries, not optimizations", stage="parse"
            )

        product = self._product(dtmc, rewards, query, timings)
        assert isinstance(product.model, Dtmc)
        with pipeline_stage("forward", timings):
            forward = forward_distribution(
                product.model,
                product.rewards,
                product.target,
                self.config.forward_accuracy,
                max_iterations=self.config.forward_max_iterations,
            )

        with pipeline_stage("statistic", timings):
            value = statistic(forward.distribution, query.statistic, query.alpha)

        return RunResult(
            command="check",
            model_name=name,
            query=query,
            value=value,
            distribution=forward.distribution,
            config=self.config,
            product=product,
            forward=forward,
            timings=timings,
        )

    def optimize(
        self,
        model: Model,
        rewards: Rewards,
        query: Query,
        *,
        vmax: Optional[float] = None,
        budget_atoms: Optional[int] = None,
        name: str = "model",
    ) -> RunResult:
        """
        Find a policy minimizing ``E`` or ``CVaR@α`` and report its approximate
        distribution.

        DTMCs are treated as MDPs with a single action per state. Unless disabled in the
        configuration, the policy is then evaluated exactly on the DTMC it induces.

        :param vmax: suggested highest atom (overridden by the configuration)
        :param budget_atoms: suggested number of budget atoms (overridden by the
            configuration)
        :raises NotAnOptimization: if the query is not an optimization query

        """
        if not query.is_optimization:
            raise NotAnOptimization(
                f"{query} is not an optimization query", stage="parse"
            )

        timings: dict[str, float] = {}
        mdp = model.as_mdp() if isinstance(model, Dtmc) else model
        product = self._product(mdp, rewards, query, timings)
        with pipeline_stage("dvi", timings):
            if self.config.method == "vi":
                solved = self._solve_scalar(product, query)
            elif query.statistic == "E":
                solved = self._solve_risk_neutral(product, vmax)
            else:
                solved = self._solve_risk_sensitive(product, query, vmax, budget_atoms)

        evaluation: Optional[PolicyEvaluation] = None
        if self.config.evaluate or solved.scalar is not None:
            alpha = query.alpha if query.alpha is not None else self.config.alpha
            with pipeline_stage("evaluate", timings):
                evaluation = evaluate_policy(
                    solved.mdp,
                    solved.export.policy,
                    solved.rewards,
                    solved.target,
                    self.config.forward_accuracy,
                    (("E", None), ("CVaR", alpha)),
                    initial=solved.initial,
                    reference=solved.dvi.distribution if solved.dvi else None,
                    max_iterations=self.config.forward_max_iterations,
                )

        with pipeline_stage("statistic", timings):
            if solved.dvi is not None:
                distribution = solved.dvi.distribution
                value = statistic(distribution, query.statistic, query.alpha)
            else:
                assert solved.scalar is not None and evaluation is not None
                distribution = evaluation.distribution
                value = solved.scalar[solved.initial]

        return RunResult(
            command="optimize",
            model_name=name,
            query=query,
            value=value,
            distribution=distribution,
            config=self.config,
            product=product,
            dvi=solved.dvi,
            scalar=solved.scalar,
            evaluation=evaluation,
            policy=solved.export,
            timings=timings,
        )

    def _solve_scalar(self, product: Product, query: Query) -> _Solved:
        if query.statistic != "E":
            raise UnsupportedObjective(
                "scalar value iteration only minimizes the expected value"
            )

        mdp = cast(Mdp, product.model)
        scalar = value_iteration(mdp, product.rewards, product.target)
        export = PolicyExport(scalar.policy, mdp, product.state_map[:, 0], _memory(product))
        return _Solved(
            mdp, product.rewards, product.target, mdp.initial, export, scalar=scalar
        )

    def _solve_risk_neutral(self, product: Product, vmax: Optional[float]) -> _Solved:
        mdp = cast(Mdp, product.model)
        result = risk_neutral_dvi(
            mdp,
            product.rewards,
            product.target,
            self.config.repr_params(vmax),
            self.config.convergence,
            max_iterations=self.config.max_iterations,
            freeze_after=self.config.freeze_after,
        )
        export = PolicyExport(result.policy, mdp, product.state_map[:, 0], _memory(product))
        return _Solved(
            mdp, product.rewards, product.target, result.initial, export, dvi=result
        )

    def _solve_risk_sensitive(
        self,
        product: Product,
        query: Query,
        vmax: Optional[float],
        budget_atoms: Optional[int],
    ) -> _Solved:
        assert query.alpha is not None
        grid = self.config.slack_grid(vmax, budget_atoms)
        result = risk_sensitive_dvi(
            cast(Mdp, product.model),
            product.rewards,
            product.target,
            query.alpha,
            grid,
            self.config.repr_params(vmax),
            self.config.convergence,
            max_iterations=self.config.max_iterations,
            freeze_after=self.config.freeze_after,
        )
        slack = result.slack
        assert slack is not None
        base_states = slack.state_map[:, 0]
        memory = _memory(product)
        export = PolicyExport(
            result.policy,
            slack.mdp,
            product.state_map[base_states, 0],
            None if memory is None else memory[base_states],
            grid.atoms[slack.state_map[:, 1]],
        )
        return _Solved(
            slack.mdp,
            slack.rewards,
            slack.lift(product.target),
            result.initial,
            export,
            dvi=result,
        )

    def evaluate(
        self,
        mdp: Mdp,
        rewards: Rewards,
        policy: Policy,
        query: Query,
        extra: Sequence[Statistic] = (),
        *,
        name: str = "model",
    ) -> RunResult:
        """
        Compute the exact reward distribution of the DTMC a memoryless policy induces and
        the queried statistics on it.

        :param mdp: the MDP
        :param rewards: its reward structures
        :param policy: the policy, one action index per state of ``mdp``
        :param query: a non-optimizing query
        :param extra: further ``(statistic, risk level)`` pairs to evaluate
        :raises UndefinedChoice: if the policy leaves a reachable state undecided

        """
        if query.is_optimization:
            raise UnsupportedObjective(
                "evaluate answers statistic queries, not optimizations", stage="parse"
            )
        elif len(policy) != mdp.num_states:
            raise ValueError(
                f"the policy covers {len(policy)} states, the MDP has {mdp.num_states}"
            )

        timings: dict[str, float] = {}
        product = self._product(mdp, rewards, query, timings)
        assert isinstance(product.model, Mdp)
        lifted = Policy(policy.choices[product.state_map[:, 0]])
        queries = [(query.statistic, query.alpha), *extra]
        with pipeline_stage("evaluate", timings):
            evaluation = evaluate_policy(
                product.model,
                lifted,
                product.rewards,
                product.target,
                self.config.forward_accuracy,
                queries,
                max_iterations=self.config.forward_max_iterations,
            )

        with pipeline_stage("statistic", timings):
            value = evaluation.values[query.label]

        return RunResult(
            command="evaluate",
            model_name=name,
            query=query,
            value=value,
            distribution=evaluation.distribution,
            config=self.config,
            product=product,
            forward=evaluation.forward,
            evaluation=evaluation,
            timings=timings,
        )

    def run(
        self,
        source: LoadedModel,
        query: Query | str,
        *,
        policy: Optional[Policy] = None,
        extra: Sequence[Statistic] = (),
    ) -> RunResult:
        """
        Answer a query on a loaded model, choosing the pipeline from the query direction
        and the model type.

        The result is saved to the result store if one was given.

        :raises UnsupportedObjective: if a statistic query is asked of an MDP without a
            policy, or a policy is given for a DTMC

        """
        if isinstance(query, str):
            with pipeline_stage("parse"):
                query = parse_query(query)

        model = source.model
        if query.is_optimization:
            result = self.optimize(
                model,
                source.rewards,
                query,
                vmax=source.vmax,
                budget_atoms=source.budget_atoms,
                name=source.name,
            )
        elif policy is not None:
            if not isinstance(model, Mdp):
                raise UnsupportedObjective(
                    "policies can only be evaluated on MDPs", stage="parse"
                )

            result = self.evaluate(
                model, source.rewards, policy, query, extra, name=source.name
            )
        elif isinstance(model, Dtmc):
            result = self.check(model, source.rewards, query, name=source.name)
        else:
            raise UnsupportedObjective(
                "statistic queries on an MDP need a policy; use a min query to optimize",
                stage="parse",
            )

        logger.info("%s %s = %g", result.model_name, query.label, result.value)
        if self.store is not None:
            with pipeline_stage("report"):
                result = replace(result, run_id=self.store.save(result.to_json()))

        return result

    async def run_async(
        self,
        source: LoadedModel,
        query: Query | str,
        *,
        policy: Optional[Policy] = None,
        extra: Sequence[Statistic] = (),
    ) -> RunResult:
        """Like :meth:`run`, but in a worker thread of the configured executor."""
        call = partial(self.run, source, query, policy=policy, extra=extra)
        return await get_running_loop().run_in_executor(
            self.executor, copy_context().run, call
        )

    def sweep_atoms(
        self,
        model: Model,
        rewards: Rewards,
        query: Query,
        atoms: Sequence[int],
        *,
        vmax: Optional[float] = None,
    ) -> Sweep:
        """
        Measure how close the approximate distribution of risk-neutral value iteration
        gets to the exact distribution of its policy as the number of atoms grows.

        The distance is the Cramér distance for categorical representations and the
        1-Wasserstein distance for quantile representations.
        """
        mdp = model.as_mdp() if isinstance(model, Dtmc) else model
        distance = (
            cramer_distance
            if self.config.representation == "categorical"
            else wasserstein_distance
        )
        product = self._product(mdp, rewards, query, {})
        assert isinstance(product.model, Mdp)
        rows: list[tuple[float, ...]] = []
        for m in atoms:
            params = replace(self.config.repr_params(vmax), m=m)
            with pipeline_stage("dvi"):
                result = risk_neutral_dvi(
                    product.model,
                    product.rewards,
                    product.target,
                    params,
                    self.config.convergence,
                    max_iterations=self.config.max_iterations,
                    freeze_after=self.config.freeze_after,
                )

            with pipeline_stage("evaluate"):
                exact = evaluate_policy(
                    product.model,
                    result.policy,
                    product.rewards,
                    product.target,
                    self.config.forward_accuracy,
                    max_iterations=self.config.forward_max_iterations,
                ).distribution

            rows.append(
                (
                    m,
                    float(distance(result.distribution, exact)),
                    float(mean(result.distribution)),
                    float(mean(exact)),
                )
            )
            logger.info("Atom sweep: m=%d distance=%g", m, rows[-1][1])

        return Sweep(("atoms", "distance", "e_dvi", "e_exact"), rows)

    def sweep_budget_atoms(
        self,
        model: Model,
        rewards: Rewards,
        query: Query,
        budget_atoms: Sequence[int],
        *,
        vmax: Optional[float] = None,
    ) -> Sweep:
        """
        Measure the conditional value-at-risk achieved by risk-sensitive value iteration
        as the budget grid gets finer.

        The risk level is the query's, or the configured one.
        """
        mdp = model.as_mdp() if isinstance(model, Dtmc) else model
        alpha = query.alpha if query.alpha is not None else self.config.alpha
        label = statistic_label("CVaR", alpha)
        product = self._product(mdp, rewards, query, {})
        assert isinstance(product.model, Mdp)
        params = self.config.repr_params(vmax)
        rows: list[tuple[float, ...]] = []
        for n in budget_atoms:
            grid = SlackGrid(params.vmin, params.vmax, n)
            with pipeline_stage("dvi"):
                result = risk_sensitive_dvi(
                    product.model,
                    product.rewards,
                    product.target,
                    alpha,
                    grid,
                    params,
                    self.config.convergence,
                    max_iterations=self.config.max_iterations,
                    freeze_after=self.config.freeze_after,
                )

            slack = result.slack
            assert slack is not None
            with pipeline_stage("evaluate"):
                evaluation = evaluate_policy(
                    slack.mdp,
                    result.policy,
                    slack.rewards,
                    slack.lift(product.target),
                    self.config.forward_accuracy,
                    (("E", None), ("CVaR", alpha)),
                    initial=result.initial,
                    max_iterations=self.config.forward_max_iterations,
                )

            rows.append(
                (
                    n,
                    float(result.budget if result.budget is not None else math.nan),
                    float(statistic(result.distribution, "CVaR", alpha)),
                    float(evaluation.values[label]),
                    float(evaluation.values["E"]),
                )
            )
            logger.info("Budget sweep: n=%d CVaR=%g", n, rows[-1][3])

        return Sweep(("budget_atoms", "budget", "cvar_dvi", "cvar_exact", "e_exact"), rows)


def report(
    result: RunResult,
    *,
    result_path: Optional[PathLike] = None,
    distribution_path: Optional[PathLike] = None,
    policy_path: Optional[PathLike] = None,
    distribution_format: Optional[Literal["csv", "json"]] = None,
    timings: bool = False,
) -> dict[str, Any]:
    """
    Write the artifacts of a run.

    :param result: the run result
    :param result_path: where to write the result document (JSON)
    :param distribution_path: where to write the distribution (CSV or JSON)
    :param policy_path: where to write the optimized policy
    :param distribution_format: format of the distribution file (default: from suffix)
    :param timings: include per-stage timings in the document
    :return: the result document, including the paths of the files written
    :raises NotAnOptimization: if a policy file is requested for a run that did not
        optimize
    :raises OSError: if a file cannot be written

    """
    with pipeline_stage("report"):
        if policy_path is not None and result.policy is None:
            raise NotAnOptimization(
                f"{result.query} computes no policy; --emit-policy needs a min query"
            )

        document = result.to_json(timings=timings)
        if distribution_path is not None:
            write_distribution(result.distribution, distribution_path, distribution_format)
            document["distribution_path"] = str(distribution_path)

        if policy_path is not None:
            assert result.policy is not None
            result.policy.write(policy_path)
            document["policy_path"] = str(policy_path)

        if result_path is not None:
            Path(result_path).write_text(
                json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )

    return document
