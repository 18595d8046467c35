"""
The ``distmc`` command line interface.

Exit codes: 0 on success, 1 on I/O errors, 2 on malformed input or unsupported queries,
3 when a precondition of the algorithms is violated and 4 when an iteration does not
converge.
"""

from __future__ import annotations

import json
import logging
import sys
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Optional, TypeVar, cast

import click

from asphalt.distmc.benchmarks import GENERATORS, BenchmarkSpec
from asphalt.distmc.checker import (
    LoadedModel,
    ModelChecker,
    RunConfig,
    RunResult,
    load_benchmark,
    load_files,
    pipeline_stage,
    report,
)
from asphalt.distmc.exceptions import (
    ModelCheckingError,
    NotAnOptimization,
    UnsupportedObjective,
)
from asphalt.distmc.ingest import read_policy, write_model
from asphalt.distmc.models import Mdp
from asphalt.distmc.query import Query, parse_query, parse_statistic
from asphalt.distmc.store import ResultStore, create_store_engine

logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., Any])


@contextmanager
def _exit_codes() -> Iterator[None]:
    try:
        yield
    except ModelCheckingError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


def _model_options(func: F) -> F:
    options = [
        click.option(
            "--model",
            "stem",
            type=click.Path(dir_okay=False, path_type=Path),
            help="model file stem (reads STEM.tra, STEM.lab and reward files)",
        ),
        click.option(
            "--kind",
            type=click.Choice(["dtmc", "mdp"]),
            default="dtmc",
            show_default=True,
            help="model type of the files",
        ),
        click.option(
            "--renormalize",
            is_flag=True,
            default=False,
            help="renormalize transition rows instead of rejecting them",
        ),
        click.option(
            "--benchmark",
            type=click.Choice(sorted(GENERATORS)),
            help="generate a case-study model instead of reading files",
        ),
        click.option("--size", type=click.IntRange(min=1), help="benchmark grid size"),
    ]
    for option in reversed(options):
        func = option(func)

    return func


def _config_options(func: F) -> F:
    options = [
        click.option(
            "--repr",
            "representation",
            type=click.Choice(["categorical", "quantile"]),
            default="categorical",
            show_default=True,
        ),
        click.option("--atoms", type=int, default=201, show_default=True),
        click.option("--vmin", type=float, default=0.0, show_default=True),
        click.option("--vmax", type=float, help="highest atom (default: model suggestion)"),
        click.option(
            "--eps", type=float, default=1e-5, show_default=True, help="forward accuracy"
        ),
        click.option(
            "--conv",
            type=float,
            default=0.01,
            show_default=True,
            help="value iteration convergence threshold",
        ),
        click.option("--budget-atoms", type=int, help="budget atoms (default: 101)"),
        click.option("--alpha", type=float, default=0.7, show_default=True),
        click.option("--max-iters", type=int, default=10_000, show_default=True),
        click.option("--freeze-after", type=int, default=1_000, show_default=True),
        click.option(
            "--method", type=click.Choice(["dvi", "vi"]), default="dvi", show_default=True
        ),
        click.option(
            "--evaluate/--no-evaluate",
            default=True,
            show_default=True,
            help="evaluate optimized policies exactly",
        ),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--store", help="database URL to store results in"),
    ]
    for option in reversed(options):
        func = option(func)

    return func


def _output_options(func: F) -> F:
    options = [
        click.option(
            "--output",
            type=click.Path(dir_okay=False, path_type=Path),
            help="write the result document here instead of standard output",
        ),
        click.option(
            "--emit-dist",
            type=click.Path(dir_okay=False, path_type=Path),
            help="write the distribution (CSV, or JSON for a .json suffix)",
        ),
        click.option(
            "--emit-policy",
            type=click.Path(dir_okay=False, path_type=Path),
            help="write the optimized policy",
        ),
        click.option("--timings", is_flag=True, default=False, help="include timings"),
    ]
    for option in reversed(options):
        func = option(func)

    return func


def _build_config(options: dict[str, Any]) -> RunConfig:
    try:
        return RunConfig(
            representation=options["representation"],
            atoms=options["atoms"],
            vmin=options["vmin"],
            vmax=options["vmax"],
            forward_accuracy=options["eps"],
            convergence=options["conv"],
            budget_atoms=options["budget_atoms"],
            alpha=options["alpha"],
            max_iterations=options["max_iters"],
            freeze_after=options["freeze_after"],
            method=options["method"],
            evaluate=options["evaluate"],
            seed=options["seed"],
        )
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None


def _checker(options: dict[str, Any]) -> ModelChecker:
    store: Optional[ResultStore] = None
    if options["store"]:
        store = ResultStore(create_store_engine(options["store"]))

    return ModelChecker(_build_config(options), store=store)


def _load(options: dict[str, Any], query: Query, seed: int) -> LoadedModel:
    if options["benchmark"] and options["stem"]:
        raise click.UsageError("--model and --benchmark are mutually exclusive")
    elif options["benchmark"]:
        return load_benchmark(BenchmarkSpec(options["benchmark"], options["size"], seed))
    elif options["stem"]:
        return load_files(
            options["stem"],
            options["kind"],
            (query.reward,),
            renormalize=options["renormalize"],
        )

    raise click.UsageError("either --model or --benchmark is required")


def _parse(text: str) -> Query:
    with pipeline_stage("parse"):
        return parse_query(text)


def _emit(result: RunResult, options: dict[str, Any]) -> None:
    document = report(
        result,
        result_path=options["output"],
        distribution_path=options["emit_dist"],
        policy_path=options["emit_policy"],
        timings=options["timings"],
    )
    if options["output"] is None:
        click.echo(json.dumps(document, indent=2, sort_keys=True))
    else:
        click.echo(f"{result.query.label} = {result.value:g}")


@click.group()
@click.option("-v", "--verbose", count=True, help="log more (repeat for debug output)")
def main(verbose: int) -> None:
    """Distributional probabilistic model checking of DTMCs and MDPs."""
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("query")
@_model_options
@_config_options
@_output_options
def check(query: str, **options: Any) -> None:
    """Compute the reward distribution of a DTMC and a statistic of it."""
    with _exit_codes():
        parsed = _parse(query)
        if options["emit_policy"] is not None and not parsed.is_optimization:
            raise NotAnOptimization(
                f"{parsed} computes no policy; --emit-policy needs a min query",
                stage="report",
            )

        checker = _checker(options)
        source = _load(options, parsed, checker.config.seed)
        _emit(checker.run(source, parsed), options)


@main.command()
@click.argument("query")
@_model_options
@_config_options
@_output_options
def optimize(query: str, **options: Any) -> None:
    """Find a policy minimizing E or CVaR and report its reward distribution."""
    with _exit_codes():
        parsed = _parse(query)
        if not parsed.is_optimization:
            raise NotAnOptimization(f"{parsed} is not a min query", stage="parse")

        checker = _checker(options)
        source = _load(options, parsed, checker.config.seed)
        _emit(checker.run(source, parsed), options)


@main.command()
@click.argument("query")
@click.option(
    "--policy",
    "policy_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="policy file (state action lines)",
)
@click.option(
    "--stat",
    "statistics",
    multiple=True,
    help="further statistic to evaluate, such as sd or CVaR@0.9 (repeatable)",
)
@_model_options
@_config_options
@_output_options
def evaluate(
    query: str, policy_path: Path, statistics: Sequence[str], **options: Any
) -> None:
    """Evaluate a memoryless policy exactly on the DTMC it induces."""
    with _exit_codes():
        parsed = _parse(query)
        with pipeline_stage("parse"):
            extra = [parse_statistic(text) for text in statistics]

        checker = _checker(options)
        source = _load(options, parsed, checker.config.seed)
        if not isinstance(source.model, Mdp):
            raise UnsupportedObjective("policies can only be evaluated on MDPs", stage="parse")

        with pipeline_stage("parse"):
            policy = read_policy(policy_path, source.model)

        _emit(checker.run(source, parsed, policy=policy, extra=extra), options)


@main.command()
@click.argument("name", type=click.Choice(sorted(GENERATORS)))
@click.option("--size", type=click.IntRange(min=1), help="grid size")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--output",
    "stem",
    required=True,
    type=click.Path(dir_okay=False, path_type=Path),
    help="file stem to write STEM.tra, STEM.lab and STEM.<reward>.rew to",
)
def generate(name: str, size: Optional[int], seed: int, stem: Path) -> None:
    """Generate a case-study MDP in the explicit file format."""
    with _exit_codes():
        source = load_benchmark(BenchmarkSpec(name, size, seed))
        files = write_model(source.model, source.rewards, stem)
        click.echo(f"wrote {files.transitions} ({source.model.num_states} states)")
        if source.formula:
            click.echo(f"formula: {source.formula}")

        click.echo(f"suggested vmax: {source.vmax:g}")


@main.command()
@click.argument("parameter", type=click.Choice(["atoms", "budget-atoms"]))
@click.argument("query")
@click.option(
    "--values",
    required=True,
    help="comma separated parameter values, such as 11,21,51,101,201",
)
@_model_options
@_config_options
@click.option(
    "--output",
    type=click.Path(dir_okay=False, path_type=Path),
    help="CSV file to write (default: standard output)",
)
def sweep(parameter: str, query: str, values: str, **options: Any) -> None:
    """Repeat optimization over a range of atom or budget atom counts."""
    try:
        counts = [int(value) for value in values.split(",") if value.strip()]
    except ValueError:
        raise click.BadParameter(
            "expected comma separated integers", param_hint="--values"
        ) from None

    with _exit_codes():
        parsed = _parse(query)
        checker = _checker(options)
        source = _load(options, parsed, checker.config.seed)
        if parameter == "atoms":
            result = checker.sweep_atoms(
                source.model, source.rewards, parsed, counts, vmax=source.vmax
            )
        else:
            result = checker.sweep_budget_atoms(
                source.model, source.rewards, parsed, counts, vmax=source.vmax
            )

        if options["output"] is None:
            click.echo(result.to_csv(), nl=False)
        else:
            result.write(cast(Path, options["output"]))
