"""Experiment configuration loaded from YAML."""

import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import yaml

from wrsearch.engine import ChangeSchedule, MinSamplesPolicy, default_phase_split
from wrsearch.exceptions import ConfigError, EngineError, ScheduleError, WRSearchError
from wrsearch.importance import EnsembleSettings
from wrsearch.objectives import Objective, objective_from_config
from wrsearch.space import SearchSpace

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "WRSEARCH_OUTPUT_DIR"
OPTIMIZERS = ("RS", "WRS")

_KEYS = {
    "space",
    "objective",
    "n_total",
    "n_phase1",
    "schedule",
    "independent_draws",
    "min_samples_policy",
    "n_runs",
    "base_seed",
    "optimizers",
    "parallelism",
    "output_dir",
    "importance",
}


def _int(data: Mapping[str, Any], key: str, default: Any = None, minimum: int = 0) -> int:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{key}' must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"'{key}' must be >= {minimum}, got {value}")
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to run and replay a campaign.

    Attributes:
        space: Search space
        objective: Objective mapping, either ``{builtin, negate}`` or
            ``{command, timeout, persistent, max_parallel}``
        n_total: Trials per run
        n_phase1: Random search steps before the schedule; ``None`` is N/e
        schedule: Fixed schedule; ``None`` estimates it per run
        independent_draws: One uniform per dimension in WRS steps
        min_samples_policy: How ``k_i`` follows from the weights
        n_runs: Runs per optimizer
        base_seed: Campaign seed all run streams derive from
        optimizers: Optimizers to run, a subset of RS and WRS
        parallelism: Concurrent runs
        output_dir: Directory receiving logs and summaries
        importance: Tree ensemble settings
    """

    space: SearchSpace
    objective: Dict[str, Any]
    n_total: int
    n_phase1: Optional[int] = None
    schedule: Optional[ChangeSchedule] = None
    independent_draws: bool = False
    min_samples_policy: MinSamplesPolicy = MinSamplesPolicy.PHASE1
    n_runs: int = 1
    base_seed: int = 0
    optimizers: Tuple[str, ...] = OPTIMIZERS
    parallelism: int = field(default_factory=lambda: os.cpu_count() or 1)
    output_dir: Path = Path("results")
    importance: EnsembleSettings = field(default_factory=EnsembleSettings)

    def __post_init__(self) -> None:
        if self.n_total < 2:
            raise ConfigError(f"n_total must be >= 2, got {self.n_total}")
        if self.n_phase1 is not None and not 1 <= self.n_phase1 < self.n_total:
            raise ConfigError(
                f"n_phase1 must lie in [1, n_total - 1], got {self.n_phase1}"
            )
        if self.n_runs < 1:
            raise ConfigError(f"n_runs must be >= 1, got {self.n_runs}")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if not self.optimizers or any(o not in OPTIMIZERS for o in self.optimizers):
            raise ConfigError(f"optimizers must be a non-empty subset of {list(OPTIMIZERS)}")
        if len(set(self.optimizers)) != len(self.optimizers):
            raise ConfigError("optimizers must not repeat")
        if self.schedule is not None and self.schedule.d != self.space.d:
            raise ConfigError(
                f"schedule has {self.schedule.d} entries, space has {self.space.d} dimensions"
            )
        # Fails early on unknown built-ins and arity mismatches.
        self.make_objective()

    @property
    def phase1(self) -> int:
        if self.n_phase1 is not None:
            return self.n_phase1
        try:
            return default_phase_split(self.n_total)
        except EngineError as ex:
            raise ConfigError(str(ex)) from ex

    def make_objective(self) -> Objective:
        """Build a fresh objective instance for this config."""
        return objective_from_config(self.objective, self.space)

    def with_optimizers(self, *optimizers: str) -> "ExperimentConfig":
        return replace(self, optimizers=tuple(optimizers))

    @classmethod
    def from_dict(
        cls, data: Mapping[str, Any], environ: Optional[Mapping[str, str]] = None
    ) -> "ExperimentConfig":
        """Validate a config mapping.

        ``WRSEARCH_OUTPUT_DIR`` in ``environ`` (default ``os.environ``)
        replaces ``output_dir``.

        Raises:
            ConfigError: On unknown keys, missing keys or invalid values
        """
        if not isinstance(data, Mapping):
            raise ConfigError("Config must be a mapping at the top level")
        unknown = set(data) - _KEYS
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
        for key in ("space", "objective", "n_total"):
            if key not in data:
                raise ConfigError(f"Missing required config key '{key}'")

        environ = os.environ if environ is None else environ
        try:
            space = SearchSpace.from_config(data["space"])
            n_total = _int(data, "n_total", minimum=2)

            n_phase1: Optional[int] = None
            if data.get("n_phase1", "auto") != "auto":
                n_phase1 = _int(data, "n_phase1", minimum=1)

            schedule = None
            raw_schedule = data.get("schedule", "auto")
            if raw_schedule != "auto":
                schedule = _schedule(raw_schedule, n_phase1 or default_phase_split(n_total))

            parallelism = data.get("parallelism", "auto")
            if parallelism == "auto":
                parallelism = os.cpu_count() or 1
            elif isinstance(parallelism, bool) or not isinstance(parallelism, int):
                raise ConfigError(f"'parallelism' must be 'auto' or an integer, got {parallelism!r}")

            optimizers = data.get("optimizers", list(OPTIMIZERS))
            if isinstance(optimizers, str) or not isinstance(optimizers, (list, tuple)):
                raise ConfigError("'optimizers' must be a list")

            importance = data.get("importance") or {}
            if not isinstance(importance, Mapping):
                raise ConfigError("'importance' must be a mapping")

            objective = data["objective"]
            if not isinstance(objective, Mapping):
                raise ConfigError("'objective' must be a mapping")

            output_dir = environ.get(OUTPUT_DIR_ENV) or data.get("output_dir", "results")

            return cls(
                space=space,
                objective=dict(objective),
                n_total=n_total,
                n_phase1=n_phase1,
                schedule=schedule,
                independent_draws=bool(data.get("independent_draws", False)),
                min_samples_policy=MinSamplesPolicy(data.get("min_samples_policy", "phase1")),
                n_runs=_int(data, "n_runs", 1, minimum=1),
                base_seed=_int(data, "base_seed", 0, minimum=0),
                optimizers=tuple(str(o).upper() for o in optimizers),
                parallelism=parallelism,
                output_dir=Path(output_dir),
                importance=EnsembleSettings.from_dict(dict(importance)),
            )
        except ConfigError:
            raise
        except (WRSearchError, ValueError, TypeError) as ex:
            raise ConfigError(str(ex)) from ex

    def to_dict(self) -> Dict[str, Any]:
        """Plain mapping that :meth:`from_dict` accepts again."""
        return {
            "space": self.space.to_config(),
            "objective": dict(self.objective),
            "n_total": self.n_total,
            "n_phase1": "auto" if self.n_phase1 is None else self.n_phase1,
            "schedule": "auto" if self.schedule is None else self.schedule.to_dict(),
            "independent_draws": self.independent_draws,
            "min_samples_policy": self.min_samples_policy.value,
            "n_runs": self.n_runs,
            "base_seed": self.base_seed,
            "optimizers": list(self.optimizers),
            "parallelism": self.parallelism,
            "output_dir": str(self.output_dir),
            "importance": self.importance.to_dict(),
        }


def _schedule(raw: Any, n_phase1: int) -> ChangeSchedule:
    if not isinstance(raw, Mapping) or "probs" not in raw:
        raise ConfigError("'schedule' must be 'auto' or a mapping with 'probs'")
    probs = list(raw["probs"])
    min_samples = raw.get("min_samples", [n_phase1] * len(probs))
    try:
        return ChangeSchedule(tuple(probs), tuple(min_samples))
    except ScheduleError as ex:
        raise ConfigError(f"Invalid schedule: {ex}") from ex


def load_config(
    path: Union[str, Path], environ: Optional[Mapping[str, str]] = None
) -> ExperimentConfig:
    """Read and validate a YAML experiment config.

    Raises:
        ConfigError: If the file cannot be read, parsed or validated
    """
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as ex:
        raise ConfigError(f"Cannot read config {path}: {ex}") from ex
    except yaml.YAMLError as ex:
        raise ConfigError(f"Invalid YAML in {path}: {ex}") from ex
    config = ExperimentConfig.from_dict(data or {}, environ)
    logger.debug("Loaded config %s: %d dimensions, N=%d", path, config.space.d, config.n_total)
    return config
