"""Command-line interface: ``wrsearch <command> ...``.

Commands:
    run        Run the campaign described by a YAML config
    compare    Same as run, with both RS and WRS
    importance Importance weights and change probabilities from a trial log
    theory     Hit probabilities of RS and WRS after n steps
    bench      Evaluate a built-in objective at given or random points
    crosstab   Objective statistics per value pair of two dimensions
"""

import argparse
import asyncio
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from wrsearch import __version__
from wrsearch.campaign import (
    CONFIG_FILE,
    SUMMARY_FILE,
    TrialLogEntry,
    load_trial_log,
    run_campaign,
    trials_from_log,
)
from wrsearch.config import ExperimentConfig, load_config
from wrsearch.engine import MinSamplesPolicy, Phase, derive_schedule
from wrsearch.exceptions import InputDataError, WRSearchError
from wrsearch.importance import EnsembleSettings, estimate_weights
from wrsearch.objectives import BUILTINS, builtin
from wrsearch.space import Dimension, SearchSpace, substream
from wrsearch.stats import cross_tabulate
from wrsearch.theory import n_step_curve, profile_from_lists

logger = logging.getLogger(__name__)


def _floats(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as ex:
        raise InputDataError(f"Expected a comma-separated list of numbers, got {text!r}") from ex


def _ints(text: str) -> List[int]:
    values = _floats(text)
    if any(not v.is_integer() for v in values):
        raise InputDataError(f"Expected integers, got {text!r}")
    return [int(v) for v in values]


def parse_n_range(text: str) -> List[int]:
    """``"1:100"`` (inclusive range), ``"1:1000:10"`` (with step) or ``"1,10,100"``."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise InputDataError(f"Invalid range {text!r}")
        bounds = _ints(",".join(parts))
        start, stop = bounds[0], bounds[1]
        step = bounds[2] if len(bounds) == 3 else 1
        if step < 1:
            raise InputDataError("Range step must be >= 1")
        values = list(range(start, stop + 1, step))
    else:
        values = _ints(text)
    if not values:
        raise InputDataError(f"Empty range {text!r}")
    if min(values) < 1:
        raise InputDataError("n must be >= 1")
    return values


def _write_rows(rows: Sequence[Sequence[Any]]) -> None:
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerows(rows)


def infer_space(entries: Sequence[TrialLogEntry]) -> SearchSpace:
    """Guess a search space from logged values.

    Integer-valued columns become integer dimensions and numeric columns real
    dimensions, both bounded by the observed range; anything else becomes a
    categorical dimension over the observed values.
    """
    if not entries:
        raise InputDataError("The trial log is empty")
    dims = []
    for name in entries[0].candidate:
        values = [e.candidate.get(name) for e in entries]
        numeric = all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
        )
        if numeric and all(isinstance(v, int) for v in values):
            dims.append(Dimension.integer(name, min(values), max(values)))
        elif numeric:
            dims.append(Dimension.real(name, float(min(values)), float(max(values))))
        else:
            dims.append(Dimension.categorical(name, list(dict.fromkeys(values))))
    logger.warning("No config found for the log; search space inferred from logged values")
    return SearchSpace(tuple(dims))


def _space_for_log(log_path: Path, config_path: Optional[str]) -> Optional[SearchSpace]:
    if config_path:
        return load_config(config_path, environ={}).space
    for candidate in (log_path.parent.parent / CONFIG_FILE, log_path.parent / CONFIG_FILE):
        if candidate.is_file():
            logger.info("Using search space from %s", candidate)
            return load_config(candidate, environ={}).space
    return None


def _load_log_trials(args: argparse.Namespace):
    log_path = Path(args.log)
    entries = load_trial_log(log_path)
    if not entries:
        raise InputDataError(f"Trial log {log_path} has no entries")
    space = _space_for_log(log_path, args.config) or infer_space(entries)
    return space, trials_from_log(entries, space)


async def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    config = _apply_overrides(config, args)
    if args.command == "compare":
        config = config.with_optimizers("RS", "WRS")
    result = await run_campaign(config)
    with (result.output_dir / SUMMARY_FILE).open("r", encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    for opt, runs in result.runs.items():
        fallbacks = sum(r.history.fallback for r in runs)
        if fallbacks:
            logger.warning("%s: %d runs fell back to random search", opt, fallbacks)
    logger.info("Artifacts written to %s", result.output_dir)
    return 0


def _apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    changes: Dict[str, Any] = {}
    if args.output_dir:
        changes["output_dir"] = Path(args.output_dir)
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.runs is not None:
        changes["n_runs"] = args.runs
    if args.parallelism is not None:
        changes["parallelism"] = args.parallelism
    return replace(config, **changes) if changes else config


async def cmd_importance(args: argparse.Namespace) -> int:
    space, trials = _load_log_trials(args)
    if args.phase1_only:
        trials = [t for t in trials if t.phase is Phase.RS]
    settings = EnsembleSettings(n_trees=args.trees, min_samples_leaf=args.min_samples_leaf)
    report = estimate_weights(trials, space, settings, seed=args.seed)
    schedule = derive_schedule(report, max(len(trials), 1), MinSamplesPolicy.PHASE1)
    _write_rows([
        ["row", *space.names],
        ["weight", *(f"{w:.4f}" for w in report.weights)],
        ["probability", *(f"{p:.3f}" for p in schedule.probs)],
    ])
    return 0


async def cmd_theory(args: argparse.Namespace) -> int:
    cards = _floats(args.cards)
    probs = _floats(args.probs)
    distinct = _ints(args.distinct) if args.distinct else [1] * len(cards)
    try:
        profile = profile_from_lists(cards, probs, distinct)
    except WRSearchError:
        raise
    except ValueError as ex:
        raise InputDataError(str(ex)) from ex
    rows: List[List[Any]] = [["n", "p_rs", "p_wrs"]]
    rows.extend([n, repr(prs), repr(pwrs)] for n, prs, pwrs in
                n_step_curve(profile, parse_n_range(args.n)))
    _write_rows(rows)
    return 0


async def cmd_bench(args: argparse.Namespace) -> int:
    objective = builtin(args.objective, negate=args.negate)
    d = objective.arity or args.dim
    points: List[List[float]] = [_floats(p) for p in args.point or []]
    if args.random:
        rng = substream(args.seed, "bench", args.objective)
        points.extend(rng.uniform(args.low, args.high, size=(args.random, d)).tolist())
    if not points:
        points = [[0.0] * d]
    if any(len(p) != d for p in points):
        raise InputDataError(f"{args.objective} takes {d} coordinates")
    values = objective(np.asarray(points, dtype=float))
    rows: List[List[Any]] = [[*(f"x{i + 1}" for i in range(d)), "value"]]
    rows.extend([*p, repr(float(v))] for p, v in zip(points, np.atleast_1d(values)))
    _write_rows(rows)
    return 0


async def cmd_crosstab(args: argparse.Namespace) -> int:
    space, trials = _load_log_trials(args)
    cells = cross_tabulate(trials, space, args.row, args.col)
    rows: List[List[Any]] = [[args.row, args.col, "count", "mean", "sd"]]
    rows.extend([c.row_value, c.col_value, c.count, repr(c.mean), repr(c.sd)] for c in cells)
    _write_rows(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wrsearch", description="Weighted random search")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("run", "Run a campaign"), ("compare", "Run RS and WRS")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="YAML experiment config")
        p.add_argument("--output-dir", help="Override the output directory")
        p.add_argument("--seed", type=int, help="Override the base seed")
        p.add_argument("--runs", type=int, help="Override runs per optimizer")
        p.add_argument("--parallelism", type=int, help="Override concurrent runs")
        p.set_defaults(handler=cmd_run)

    p = sub.add_parser("importance", help="Weights and probabilities from a trial log")
    p.add_argument("log", help="JSONL trial log")
    p.add_argument("--config", help="Config holding the search space of the log")
    p.add_argument("--phase1-only", action="store_true", help="Use RS-phase trials only")
    p.add_argument("--trees", type=int, default=32, help="Number of trees")
    p.add_argument("--min-samples-leaf", type=int, default=2)
    p.add_argument("--seed", type=int, default=0, help="Ensemble seed")
    p.set_defaults(handler=cmd_importance)

    p = sub.add_parser("theory", help="n-step hit probabilities for a discrete profile")
    p.add_argument("--cards", required=True, help="Cardinalities, e.g. 10,10")
    p.add_argument("--probs", required=True, help="Change probabilities, first must be 1")
    p.add_argument("--distinct", help="Distinct values seen per dimension (default all 1)")
    p.add_argument("--n", default="1", help="Steps: 1:100, 1:1000:10 or 1,10,100")
    p.set_defaults(handler=cmd_theory)

    p = sub.add_parser("bench", help="Evaluate a built-in objective")
    p.add_argument("objective", choices=sorted(BUILTINS))
    p.add_argument("--point", action="append", help="Comma-separated coordinates")
    p.add_argument("--random", type=int, default=0, help="Number of random points")
    p.add_argument("--low", type=float, default=-600.0)
    p.add_argument("--high", type=float, default=600.0)
    p.add_argument("--dim", type=int, default=6, help="Dimension for variable-arity objectives")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--negate", action="store_true", help="Print -f(x)")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("crosstab", help="Per value pair statistics from a trial log")
    p.add_argument("log", help="JSONL trial log")
    p.add_argument("row", help="Row dimension")
    p.add_argument("col", help="Column dimension")
    p.add_argument("--config", help="Config holding the search space of the log")
    p.set_defaults(handler=cmd_crosstab)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    handler: Callable[[argparse.Namespace], Any] = args.handler
    try:
        return asyncio.run(handler(args))
    except WRSearchError as ex:
        logger.error("%s", ex)
        return ex.exit_code
    except KeyboardInterrupt:
        logger.info("Interrupted")
        return 1
    except Exception as ex:
        logger.exception("Unexpected error: %s", ex)
        return 1


if __name__ == "__main__":
    sys.exit(main())
