"""Weighted random search: the single step, the two-phase driver and plain RS.

The objective is always maximized. Random search is the special case of a
schedule whose probabilities of change are all one.
"""

import asyncio
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from wrsearch.exceptions import (
    ConstantObjectiveError,
    EngineError,
    InputDataError,
    ObjectiveError,
    ScheduleError,
)
from wrsearch.importance import EnsembleSettings, WeightReport, estimate_weights
from wrsearch.objectives import Objective
from wrsearch.space import Candidate, SearchSpace, sample_dimension
from wrsearch.theory import min_steps_for_distinct

logger = logging.getLogger(__name__)

# Probabilities of change never drop below this value.
PROBABILITY_FLOOR = 1e-3


class Phase(str, Enum):
    RS = "RS"
    WRS = "WRS"


class MinSamplesPolicy(str, Enum):
    """How ``k_i`` is chosen when a schedule is derived from weights."""

    PHASE1 = "phase1"
    INVERSE_PROBABILITY = "inverse_probability"


@dataclass(frozen=True)
class ChangeSchedule:
    """Probabilities of change ``p_i`` and minimum step counts ``k_i``.

    Stored in search-space order; the dimension with ``p_i = 1`` always changes.
    """

    probs: Tuple[float, ...]
    min_samples: Tuple[int, ...]

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probs)
        min_samples = tuple(int(k) for k in self.min_samples)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "min_samples", min_samples)
        if not probs:
            raise ScheduleError("A schedule needs at least one dimension")
        if len(probs) != len(min_samples):
            raise ScheduleError("probs and min_samples must have the same length")
        if any(not 0.0 < p <= 1.0 for p in probs):
            raise ScheduleError(f"Probabilities of change must lie in (0, 1]: {probs}")
        if max(probs) != 1.0:
            raise ScheduleError("At least one probability of change must be exactly 1")
        if any(k < 0 for k in min_samples):
            raise ScheduleError(f"Minimum sample counts must be >= 0: {min_samples}")

    @classmethod
    def all_ones(cls, d: int, n_phase1: int = 0) -> "ChangeSchedule":
        """The pure random search schedule."""
        return cls(tuple([1.0] * d), tuple([n_phase1] * d))

    @property
    def d(self) -> int:
        return len(self.probs)

    @property
    def is_random_search(self) -> bool:
        return all(p == 1.0 for p in self.probs)

    def dimension_order(self) -> List[int]:
        """Dimension indices by descending probability of change (stable)."""
        return sorted(range(self.d), key=lambda i: -self.probs[i])

    def to_dict(self) -> Dict[str, List[Any]]:
        return {"probs": list(self.probs), "min_samples": list(self.min_samples)}


@dataclass(frozen=True)
class TrialRecord:
    """One evaluated candidate.

    Failed evaluations carry ``value = nan`` and an error message; they count
    against the budget but never become the best-so-far.
    """

    iteration: int
    candidate: Candidate
    value: float
    changed: Tuple[bool, ...]
    phase: Phase
    failed: bool = False
    error: Optional[str] = None
    wall_time: float = 0.0

    def __post_init__(self) -> None:
        if self.iteration < 1:
            raise ValueError("iteration is 1-based")
        if not any(self.changed):
            raise ValueError("At least one dimension must change in every trial")


@dataclass(frozen=True)
class BestSoFar:
    candidate: Candidate
    value: float
    iteration: int


@dataclass
class RunHistory:
    """Trial ledger of one run plus its running best (maximization).

    Attributes:
        space: Search space of the run
        n_total: Budget ``N``
        n_phase1: Random search steps before the schedule is derived, ``N_0``
        trials: Trials in iteration order
        best: Best successful trial so far; ties replace
        schedule: Change schedule, absent during phase 1
        weights: Importance weights behind the schedule, if any
        fallback: True when the schedule fell back to pure random search
        fallback_reason: Why it fell back
    """

    space: SearchSpace
    n_total: int
    n_phase1: int
    trials: List[TrialRecord] = field(default_factory=list)
    best: Optional[BestSoFar] = None
    schedule: Optional[ChangeSchedule] = None
    weights: Optional[WeightReport] = None
    fallback: bool = False
    fallback_reason: Optional[str] = None

    def __post_init__(self) -> None:
        if not 1 <= self.n_phase1 < self.n_total:
            raise EngineError(
                f"Need 1 <= n_phase1 < n_total, got n_phase1={self.n_phase1}, "
                f"n_total={self.n_total}"
            )

    @property
    def next_iteration(self) -> int:
        return len(self.trials) + 1

    @property
    def is_complete(self) -> bool:
        return len(self.trials) >= self.n_total

    def record(self, trial: TrialRecord) -> None:
        """Append a trial and update the best-so-far (``>=`` replaces)."""
        if self.is_complete:
            raise EngineError(f"Budget of {self.n_total} trials is exhausted")
        if trial.iteration != self.next_iteration:
            raise EngineError(
                f"Expected iteration {self.next_iteration}, got {trial.iteration}"
            )
        self.trials.append(trial)
        if trial.failed:
            return
        if self.best is None or trial.value >= self.best.value:
            self.best = BestSoFar(trial.candidate, trial.value, trial.iteration)

    def successful_trials(self) -> List[TrialRecord]:
        return [t for t in self.trials if not t.failed]

    def phase1_trials(self) -> List[TrialRecord]:
        return self.trials[: self.n_phase1]

    def best_trace(self) -> List[float]:
        """Best-so-far value after every iteration (nan until the first success)."""
        trace, best = [], -math.inf
        for trial in self.trials:
            if not trial.failed and trial.value >= best:
                best = trial.value
            trace.append(best if best > -math.inf else math.nan)
        return trace


def default_phase_split(n_total: int) -> int:
    """``N_0 = round(N / e)``, kept inside ``[1, N - 1]``."""
    if n_total < 2:
        raise EngineError(f"n_total must be >= 2, got {n_total}")
    n_phase1 = int(math.floor(n_total / math.e + 0.5))
    return min(max(n_phase1, 1), n_total - 1)


def derive_schedule(
    weights: Union[WeightReport, Sequence[float]],
    n_phase1: int,
    min_samples_policy: Union[MinSamplesPolicy, str] = MinSamplesPolicy.PHASE1,
) -> ChangeSchedule:
    """Turn importance weights into probabilities of change.

    ``p_i = w_i / w_max`` with a floor of :data:`PROBABILITY_FLOOR`; the
    heaviest dimension gets exactly 1. ``k_i`` is ``N_0`` for every dimension,
    or ``max(N_0, floor(1/p_i) + 1)`` under the inverse-probability policy.

    Args:
        weights: Report or plain sequence of non-negative weights
        n_phase1: Length of the random search phase
        min_samples_policy: How to set ``k_i``

    Returns:
        The derived schedule

    Raises:
        ScheduleError: If weights are negative, non-finite or all zero
    """
    values = np.asarray(
        weights.weights if isinstance(weights, WeightReport) else weights, dtype=float
    )
    if values.size == 0 or not np.all(np.isfinite(values)) or np.any(values < 0):
        raise ScheduleError(f"Weights must be finite and non-negative: {values.tolist()}")
    w_max = float(values.max())
    if w_max <= 0.0:
        raise ScheduleError("All weights are zero; no dimension is important")

    probs = tuple(max(float(w) / w_max, PROBABILITY_FLOOR) for w in values)
    policy = MinSamplesPolicy(min_samples_policy)
    if policy is MinSamplesPolicy.INVERSE_PROBABILITY:
        min_samples = tuple(max(n_phase1, min_steps_for_distinct(p)) for p in probs)
    else:
        min_samples = tuple([n_phase1] * len(probs))
    return ChangeSchedule(probs, min_samples)


TrialCallback = Callable[[TrialRecord, RunHistory], None]


def _notify(callback: Optional[TrialCallback], trial: TrialRecord, history: RunHistory) -> None:
    if callback is not None:
        callback(trial, history)


def _open_unit(rng: np.random.Generator) -> float:
    """Uniform draw on the open interval (0, 1)."""
    p = rng.random()
    while p == 0.0:
        p = rng.random()
    return p


async def _evaluate(objective: Objective, candidate: Candidate) -> Tuple[float, Optional[str]]:
    try:
        value = float(await objective.evaluate(candidate))
    except ObjectiveError as ex:
        logger.warning("Evaluation failed for %s: %s", candidate.values, ex)
        return math.nan, str(ex) or type(ex).__name__
    if not math.isfinite(value):
        logger.warning("Objective returned non-finite value %r", value)
        return math.nan, f"non-finite objective value: {value!r}"
    return value, None


async def _step(
    history: RunHistory,
    rng: np.random.Generator,
    objective: Objective,
    schedule: ChangeSchedule,
    phase: Phase,
    independent_draws: bool,
) -> TrialRecord:
    space = history.space
    if schedule.d != space.d:
        raise EngineError(f"Schedule has {schedule.d} dimensions, space has {space.d}")
    k = history.next_iteration

    if independent_draws:
        draws = [_open_unit(rng) for _ in range(space.d)]
    else:
        draws = [_open_unit(rng)] * space.d
    changed = tuple(
        schedule.probs[i] >= draws[i] or k <= schedule.min_samples[i] for i in range(space.d)
    )
    if not all(changed) and history.best is None:
        raise EngineError("No best-so-far candidate to reuse values from")

    values = []
    for i, dim in enumerate(space):
        if changed[i]:
            values.append(sample_dimension(dim, rng))
        else:
            values.append(history.best.candidate[i])
    candidate = Candidate(tuple(values))

    started = time.perf_counter()
    value, error = await _evaluate(objective, candidate)
    trial = TrialRecord(
        iteration=k,
        candidate=candidate,
        value=value,
        changed=changed,
        phase=phase,
        failed=error is not None,
        error=error,
        wall_time=time.perf_counter() - started,
    )
    history.record(trial)
    logger.debug("%s step %d: value=%r changed=%s", phase.value, k, value, changed)
    return trial


async def wrs_step(
    history: RunHistory,
    rng: np.random.Generator,
    objective: Objective,
    independent_draws: bool = False,
) -> TrialRecord:
    """One weighted random search step.

    One uniform ``p`` in (0, 1) is drawn per step; dimension ``i`` is
    resampled iff ``p_i >= p`` or ``k <= k_i`` and otherwise reuses the
    best-so-far value. With ``independent_draws`` every dimension gets its own
    uniform instead.

    Args:
        history: Run history holding the schedule and best-so-far
        rng: The run's generator
        objective: Objective to maximize
        independent_draws: Draw one uniform per dimension

    Returns:
        The appended trial record

    Raises:
        EngineError: If the history has no schedule, or a value must be reused
            before any trial succeeded
    """
    if history.schedule is None:
        raise EngineError("wrs_step needs a change schedule")
    return await _step(history, rng, objective, history.schedule, Phase.WRS, independent_draws)


async def rs_step(
    history: RunHistory, rng: np.random.Generator, objective: Objective
) -> TrialRecord:
    """One random search step: a WRS step under the all-ones schedule."""
    schedule = ChangeSchedule.all_ones(history.space.d, history.n_phase1)
    return await _step(history, rng, objective, schedule, Phase.RS, False)


async def run(
    space: SearchSpace,
    objective: Objective,
    n_total: int,
    n_phase1: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    *,
    schedule: Optional[ChangeSchedule] = None,
    importance: Optional[EnsembleSettings] = None,
    min_samples_policy: Union[MinSamplesPolicy, str] = MinSamplesPolicy.PHASE1,
    independent_draws: bool = False,
    on_trial: Optional[TrialCallback] = None,
) -> RunHistory:
    """Two-phase weighted random search.

    Runs ``N_0`` random search steps, estimates importance weights on them,
    derives the schedule and spends the rest of the budget on WRS steps.

    Args:
        space: Search space
        objective: Objective to maximize
        n_total: Budget ``N``
        n_phase1: ``N_0``; defaults to :func:`default_phase_split`
        rng: Generator owned by this run
        schedule: Explicit schedule, skipping importance estimation
        importance: Tree ensemble settings
        min_samples_policy: How ``k_i`` is derived from the weights
        independent_draws: One uniform per dimension in WRS steps
        on_trial: Called with every new trial and the history

    Returns:
        The complete history. If importance estimation fails the schedule
        falls back to all ones and ``history.fallback`` is set.
    """
    if n_phase1 is None:
        n_phase1 = default_phase_split(n_total)
    rng = rng if rng is not None else np.random.default_rng()
    history = RunHistory(space, n_total, n_phase1)

    for _ in range(n_phase1):
        _notify(on_trial, await rs_step(history, rng, objective), history)

    if schedule is not None and history.best is None and not schedule.is_random_search:
        logger.warning("No successful trial in phase 1; continuing as random search")
        history.fallback = True
        history.fallback_reason = "no successful trial in phase 1"
        history.schedule = ChangeSchedule.all_ones(space.d, n_phase1)
    elif schedule is not None:
        history.schedule = schedule
    else:
        # Spawning leaves the sampling stream untouched.
        model_seed = rng.spawn(1)[0]
        try:
            # CPU bound; fitted in a worker thread.
            history.weights = await asyncio.to_thread(
                estimate_weights, history.phase1_trials(), space, importance, seed=model_seed
            )
            history.schedule = derive_schedule(history.weights, n_phase1, min_samples_policy)
        except (ConstantObjectiveError, InputDataError, ScheduleError) as ex:
            logger.warning("Importance estimation failed (%s); continuing as random search", ex)
            history.fallback = True
            history.fallback_reason = str(ex)
            history.schedule = ChangeSchedule.all_ones(space.d, n_phase1)
    logger.info("Phase 2 schedule: %s", history.schedule.probs)

    while not history.is_complete:
        trial = await wrs_step(history, rng, objective, independent_draws=independent_draws)
        _notify(on_trial, trial, history)
    if history.best is not None:
        logger.info("WRS run finished: best=%r at iteration %d",
                    history.best.value, history.best.iteration)
    return history


async def random_search(
    space: SearchSpace,
    objective: Objective,
    n_total: int,
    rng: Optional[np.random.Generator] = None,
    on_trial: Optional[TrialCallback] = None,
) -> RunHistory:
    """Plain random search over the whole budget."""
    rng = rng if rng is not None else np.random.default_rng()
    history = RunHistory(space, n_total, default_phase_split(n_total))
    while not history.is_complete:
        _notify(on_trial, await rs_step(history, rng, objective), history)
    if history.best is not None:
        logger.info("RS run finished: best=%r at iteration %d",
                    history.best.value, history.best.iteration)
    return history
