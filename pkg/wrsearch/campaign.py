"""Campaign orchestration: seeded runs, JSONL trial logs and CSV summaries."""

import asyncio
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import yaml

from wrsearch.config import ExperimentConfig
from wrsearch.engine import Phase, RunHistory, TrialRecord, random_search, run
from wrsearch.exceptions import InputDataError, OutputError
from wrsearch.objectives import Objective
from wrsearch.space import SearchSpace, substream
from wrsearch.stats import CampaignSummary, TTestResult, pooled_t_test, summarize

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.csv"
SCHEDULES_FILE = "schedules.csv"
CONFIG_FILE = "config.yaml"
LOG_DIR = "logs"
SUMMARY_FIELDS = ["optimizer", "best", "mean", "sd", "n_runs", "t", "df", "se", "p"]


def run_id(optimizer: str, run_index: int) -> str:
    return f"{optimizer}_run{run_index}"


@dataclass(frozen=True)
class TrialLogEntry:
    """One line of a trial log.

    ``value`` and ``best`` are ``None`` when undefined (failed trial, no
    success yet). ``wall_time`` is the only field that differs between
    replays of the same seed.
    """

    run_id: str
    optimizer: str
    iteration: int
    phase: str
    candidate: Dict[str, Any]
    value: Optional[float]
    changed: List[bool]
    best: Optional[float]
    failed: bool = False
    error: Optional[str] = None
    wall_time: float = 0.0

    @classmethod
    def from_trial(
        cls, trial: TrialRecord, history: RunHistory, optimizer: str, run_index: int
    ) -> "TrialLogEntry":
        best = history.best.value if history.best is not None else None
        return cls(
            run_id=run_id(optimizer, run_index),
            optimizer=optimizer,
            iteration=trial.iteration,
            phase=trial.phase.value,
            candidate=history.space.as_dict(trial.candidate),
            value=None if trial.failed else trial.value,
            changed=list(trial.changed),
            best=best,
            failed=trial.failed,
            error=trial.error,
            wall_time=trial.wall_time,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "run_id": self.run_id,
                "optimizer": self.optimizer,
                "iteration": self.iteration,
                "phase": self.phase,
                "candidate": self.candidate,
                "value": self.value,
                "changed": self.changed,
                "best": self.best,
                "failed": self.failed,
                "error": self.error,
                "wall_time": self.wall_time,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "TrialLogEntry":
        obj = json.loads(line)
        if not isinstance(obj, dict):
            raise ValueError("log line is not a JSON object")
        return cls(
            run_id=str(obj["run_id"]),
            optimizer=str(obj["optimizer"]),
            iteration=int(obj["iteration"]),
            phase=str(obj["phase"]),
            candidate=dict(obj["candidate"]),
            value=None if obj.get("value") is None else float(obj["value"]),
            changed=[bool(c) for c in obj["changed"]],
            best=None if obj.get("best") is None else float(obj["best"]),
            failed=bool(obj.get("failed", False)),
            error=obj.get("error"),
            wall_time=float(obj.get("wall_time", 0.0)),
        )

    def to_trial(self, space: SearchSpace) -> TrialRecord:
        """Rebuild the engine record, checking the candidate against ``space``."""
        candidate = space.from_mapping(self.candidate)
        if not space.contains(candidate):
            raise InputDataError(
                f"{self.run_id} iteration {self.iteration}: candidate outside the space"
            )
        return TrialRecord(
            iteration=self.iteration,
            candidate=candidate,
            value=math.nan if self.value is None else self.value,
            changed=tuple(self.changed),
            phase=Phase(self.phase),
            failed=self.failed or self.value is None,
            error=self.error,
            wall_time=self.wall_time,
        )


def load_trial_log(path: Union[str, Path]) -> List[TrialLogEntry]:
    """Parse a JSONL trial log.

    Raises:
        InputDataError: If the file cannot be read, a line is malformed or
            iterations do not increase within a run
    """
    path = Path(path)
    entries: List[TrialLogEntry] = []
    last: Dict[str, int] = {}
    try:
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    entry = TrialLogEntry.from_json(line)
                except (ValueError, KeyError, TypeError) as ex:
                    raise InputDataError(f"{path}:{lineno}: malformed log line ({ex})") from ex
                if entry.iteration <= last.get(entry.run_id, 0):
                    raise InputDataError(
                        f"{path}:{lineno}: iteration {entry.iteration} does not increase "
                        f"within {entry.run_id}"
                    )
                last[entry.run_id] = entry.iteration
                entries.append(entry)
    except OSError as ex:
        raise InputDataError(f"Cannot read trial log {path}: {ex}") from ex
    return entries


def trials_from_log(entries: Sequence[TrialLogEntry], space: SearchSpace) -> List[TrialRecord]:
    try:
        return [entry.to_trial(space) for entry in entries]
    except (ValueError, KeyError) as ex:
        raise InputDataError(f"Log does not match the search space: {ex}") from ex


@dataclass
class RunResult:
    optimizer: str
    run_index: int
    history: RunHistory
    log_path: Path

    @property
    def best_value(self) -> Optional[float]:
        return self.history.best.value if self.history.best is not None else None


@dataclass
class CampaignResult:
    """In-memory outcome of :func:`run_campaign`; the same data is on disk."""

    config: ExperimentConfig
    output_dir: Path
    runs: Dict[str, List[RunResult]] = field(default_factory=dict)
    summaries: Dict[str, CampaignSummary] = field(default_factory=dict)
    t_test: Optional[TTestResult] = None

    def run_bests(self, optimizer: str) -> List[float]:
        return [r.best_value for r in self.runs.get(optimizer, []) if r.best_value is not None]


def _open_output(path: Path, mode: str = "w") -> IO[str]:
    try:
        return path.open(mode, encoding="utf-8", newline="")
    except OSError as ex:
        raise OutputError(f"Cannot write {path}: {ex}") from ex


def prepare_output_dir(output_dir: Path) -> None:
    try:
        (output_dir / LOG_DIR).mkdir(parents=True, exist_ok=True)
    except OSError as ex:
        raise OutputError(f"Cannot create output directory {output_dir}: {ex}") from ex


async def run_one(
    config: ExperimentConfig,
    optimizer: str,
    run_index: int,
    objective: Objective,
    output_dir: Path,
) -> RunResult:
    """Execute one seeded run and stream its trials to its own log file."""
    rng = substream(config.base_seed, optimizer, run_index)
    log_path = output_dir / LOG_DIR / f"{run_id(optimizer, run_index)}.jsonl"
    with _open_output(log_path) as fh:

        def write_trial(trial: TrialRecord, history: RunHistory) -> None:
            entry = TrialLogEntry.from_trial(trial, history, optimizer, run_index)
            fh.write(entry.to_json() + "\n")

        try:
            if optimizer == "WRS":
                history = await run(
                    config.space,
                    objective,
                    config.n_total,
                    config.phase1,
                    rng,
                    schedule=config.schedule,
                    importance=config.importance,
                    min_samples_policy=config.min_samples_policy,
                    independent_draws=config.independent_draws,
                    on_trial=write_trial,
                )
            else:
                history = await random_search(
                    config.space, objective, config.n_total, rng, on_trial=write_trial
                )
        except OSError as ex:
            raise OutputError(f"Cannot write {log_path}: {ex}") from ex

    failed = sum(t.failed for t in history.trials)
    if failed:
        logger.warning("%s: %d of %d trials failed", run_id(optimizer, run_index),
                       failed, len(history.trials))
    return RunResult(optimizer, run_index, history, log_path)


async def run_campaign(config: ExperimentConfig) -> CampaignResult:
    """Run every optimizer ``n_runs`` times and write all artifacts.

    Runs are independent and execute concurrently up to
    ``config.parallelism``; each one owns a substream of the base seed and its
    own log file. Summaries are computed after all runs finished.

    Args:
        config: Validated experiment config

    Returns:
        Runs, per-optimizer summaries and the WRS-vs-RS t-test (if both ran)

    Raises:
        OutputError: If the output directory or a file cannot be written
    """
    output_dir = config.output_dir
    prepare_output_dir(output_dir)
    write_config(config, output_dir / CONFIG_FILE)
    logger.info(
        "Campaign: %s x %d runs, N=%d, seed=%d -> %s",
        "/".join(config.optimizers), config.n_runs, config.n_total, config.base_seed, output_dir,
    )

    semaphore = asyncio.Semaphore(config.parallelism)
    result = CampaignResult(config, output_dir)

    async with config.make_objective() as objective:

        async def bounded(optimizer: str, run_index: int) -> RunResult:
            async with semaphore:
                return await run_one(config, optimizer, run_index, objective, output_dir)

        runs = await asyncio.gather(
            *(bounded(opt, i) for opt in config.optimizers for i in range(config.n_runs))
        )

    for opt in config.optimizers:
        result.runs[opt] = sorted(
            (r for r in runs if r.optimizer == opt), key=lambda r: r.run_index
        )
        bests = result.run_bests(opt)
        if len(bests) < config.n_runs:
            logger.warning("%s: %d runs without a successful trial are left out of the summary",
                           opt, config.n_runs - len(bests))
        if bests:
            result.summaries[opt] = summarize(bests)
            logger.info("%s: best=%.6g mean=%.6g sd=%.6g", opt, result.summaries[opt].best,
                        result.summaries[opt].mean, result.summaries[opt].sd)
        write_convergence(result.runs[opt], output_dir / f"convergence_{opt}.csv")

    wrs, rs = result.run_bests("WRS"), result.run_bests("RS")
    if len(wrs) >= 2 and len(rs) >= 2:
        result.t_test = pooled_t_test(wrs, rs)
        logger.info("t-test WRS vs RS: t=%.4f df=%d p=%.3g", result.t_test.t,
                    result.t_test.df, result.t_test.p)

    write_summary(result, output_dir / SUMMARY_FILE)
    if "WRS" in result.runs:
        write_schedules(result.runs["WRS"], config.space, output_dir / SCHEDULES_FILE)
    return result


def write_config(config: ExperimentConfig, path: Path) -> None:
    """Store the resolved config next to the logs so they can be re-read."""
    with _open_output(path) as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)


def write_summary(result: CampaignResult, path: Path) -> None:
    """``optimizer,best,mean,sd,n_runs`` rows plus a ``t-test`` row."""
    with _open_output(path) as fh:
        writer = csv.DictWriter(fh, SUMMARY_FIELDS, restval="", lineterminator="\n")
        writer.writeheader()
        for opt, summary in result.summaries.items():
            writer.writerow(summary.as_row(opt))
        if result.t_test is not None:
            tt = result.t_test
            writer.writerow(
                {"optimizer": "t-test", "t": tt.t, "df": tt.df, "se": tt.se, "p": tt.p}
            )


def _column_mean(rows: np.ndarray) -> List[float]:
    means = []
    for row in rows:
        finite = row[np.isfinite(row)]
        means.append(float(finite.mean()) if finite.size else math.nan)
    return means


def write_convergence(runs: Sequence[RunResult], path: Path) -> None:
    """Best-so-far per iteration: one column per run plus their mean."""
    if not runs:
        return
    traces = np.array([r.history.best_trace() for r in runs], dtype=float).T
    with _open_output(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration"] + [f"run_{r.run_index}" for r in runs] + ["mean"])
        for k, (row, mean) in enumerate(zip(traces, _column_mean(traces)), start=1):
            writer.writerow([k, *(float(v) for v in row), mean])


def write_schedules(runs: Iterable[RunResult], space: SearchSpace, path: Path) -> None:
    with _open_output(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["optimizer", "run", "dimension", "weight", "probability", "min_samples", "fallback"]
        )
        for r in runs:
            schedule = r.history.schedule
            if schedule is None:
                continue
            weights = r.history.weights.weights if r.history.weights is not None else None
            for i, name in enumerate(space.names):
                writer.writerow([
                    r.optimizer,
                    r.run_index,
                    name,
                    "" if weights is None else weights[i],
                    schedule.probs[i],
                    schedule.min_samples[i],
                    int(r.history.fallback),
                ])


def read_summary(path: Union[str, Path]) -> Dict[str, Dict[str, str]]:
    """Rows of a summary CSV keyed by their first column."""
    try:
        with Path(path).open("r", encoding="utf-8", newline="") as fh:
            return {row["optimizer"]: row for row in csv.DictReader(fh)}
    except OSError as ex:
        raise InputDataError(f"Cannot read summary {path}: {ex}") from ex
