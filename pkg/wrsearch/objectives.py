"""Objective functions: Griewank benchmarks and external child processes.

Every objective is maximized. Minimization problems are negated when the
objective is constructed.
"""

import asyncio
import json
import logging
import math
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from wrsearch.exceptions import ConfigError, ObjectiveError, ObjectiveTimeoutError
from wrsearch.space import Candidate, SearchSpace

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 3600.0

ArrayLike = Union[Sequence[float], np.ndarray]


def _as_points(x: ArrayLike, d: Optional[int]) -> np.ndarray:
    points = np.asarray(x, dtype=float)
    if points.ndim == 0 or points.shape[-1] < 1:
        raise ValueError("x must have at least one coordinate")
    if d is not None and points.shape[-1] != d:
        raise ValueError(f"Expected {d} coordinates, got {points.shape[-1]}")
    return points


def _scalar_or_array(value: np.ndarray) -> Union[float, np.ndarray]:
    return float(value) if np.ndim(value) == 0 else value


def griewank(x: ArrayLike, d: Optional[int] = None) -> Union[float, np.ndarray]:
    """Griewank function ``1 + sum(x_i^2)/4000 - prod(cos(x_i/sqrt(i)))``.

    Accepts a single point or an array of points with coordinates on the last
    axis. ``i`` is 1-based.
    """
    points = _as_points(x, d)
    i = np.arange(1, points.shape[-1] + 1, dtype=float)
    value = (
        1.0
        + np.sum(points**2, axis=-1) / 4000.0
        - np.prod(np.cos(points / np.sqrt(i)), axis=-1)
    )
    return _scalar_or_array(value)


def griewank_modified_6(x: ArrayLike) -> Union[float, np.ndarray]:
    """Six-dimensional Griewank variant with quadratic weights ``(i-1)/4000``.

    The first dimension only enters through the cosine product, so the
    dimensions grow in importance with their index.
    """
    points = _as_points(x, 6)
    i = np.arange(1, 7, dtype=float)
    value = (
        1.0
        + np.sum((i - 1.0) / 4000.0 * points**2, axis=-1)
        - np.prod(np.cos(points / np.sqrt(i)), axis=-1)
    )
    return _scalar_or_array(value)


@dataclass(frozen=True)
class BuiltinSpec:
    func: Callable[[np.ndarray], Union[float, np.ndarray]]
    arity: Optional[int]
    description: str


BUILTINS: Dict[str, BuiltinSpec] = {
    "griewank": BuiltinSpec(griewank, None, "Griewank function G_d, any dimension"),
    "griewank_modified_6": BuiltinSpec(
        griewank_modified_6, 6, "Griewank G6 with per-dimension quadratic weights"
    ),
}


class Objective(ABC):
    """Function to maximize over a search space.

    Objectives with a lifecycle are async context managers; for the others
    :meth:`close` does nothing.
    """

    name: str = "objective"
    arity: Optional[int] = None
    max_parallel: Optional[int] = None

    @abstractmethod
    async def evaluate(self, candidate: Candidate) -> float:
        """Return the objective value of ``candidate``.

        Raises:
            ObjectiveError: If this single evaluation failed
        """

    async def close(self) -> None:
        return None

    async def __aenter__(self) -> "Objective":
        return self

    async def __aexit__(self, exc_type, exc_val, exc_tb) -> None:
        await self.close()


class BuiltinObjective(Objective):
    """In-process objective wrapping a pure numeric function."""

    def __init__(
        self,
        name: str,
        func: Callable[[np.ndarray], Union[float, np.ndarray]],
        arity: Optional[int] = None,
        negate: bool = True,
    ):
        self.name = name
        self.func = func
        self.arity = arity
        self.negate = negate

    def __call__(self, x: ArrayLike) -> Union[float, np.ndarray]:
        """Evaluate one point or a batch synchronously, sign included."""
        value = self.func(np.asarray(x, dtype=float))
        return -value if self.negate else value

    async def evaluate(self, candidate: Candidate) -> float:
        if self.arity is not None and len(candidate) != self.arity:
            raise ObjectiveError(
                f"{self.name} takes {self.arity} arguments, got {len(candidate)}"
            )
        try:
            return float(self(candidate.values))
        except (TypeError, ValueError) as ex:
            raise ObjectiveError(f"{self.name} cannot evaluate {candidate.values}: {ex}") from ex

    def __repr__(self) -> str:
        sign = "-" if self.negate else ""
        return f"BuiltinObjective({sign}{self.name})"


def builtin(name: str, negate: bool = True) -> BuiltinObjective:
    """Look up a built-in benchmark by name.

    Raises:
        ConfigError: If no built-in has this name
    """
    try:
        spec = BUILTINS[name]
    except KeyError:
        raise ConfigError(
            f"Unknown built-in objective {name!r}; choose from {sorted(BUILTINS)}"
        ) from None
    return BuiltinObjective(name, spec.func, spec.arity, negate)


def parse_response(raw: Union[str, bytes]) -> float:
    """Extract the value from one response line of the child protocol.

    Raises:
        ObjectiveError: If the line is not ``{"value": <finite number>}``
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8", errors="replace")
    raw = raw.strip()
    if not raw:
        raise ObjectiveError("Empty response from objective process")
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as ex:
        raise ObjectiveError(f"Malformed response {raw[:200]!r}: {ex}") from ex
    if not isinstance(obj, dict):
        raise ObjectiveError(f"Response must be a JSON object, got {raw[:200]!r}")
    if obj.get("error"):
        raise ObjectiveError(f"Objective process reported: {obj['error']}")
    value = obj.get("value")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ObjectiveError(f"Response has no numeric 'value': {raw[:200]!r}")
    if not math.isfinite(value):
        raise ObjectiveError(f"Non-finite value in response: {value!r}")
    return float(value)


def _to_json(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    return value


class ExternalObjective(Objective):
    """Objective evaluated by a child process over newline-delimited JSON.

    Each request is one line mapping dimension names to values; each answer
    is one line ``{"value": <number>}`` (or ``{"error": "..."}``). In the
    default mode every evaluation starts a fresh process. With
    ``persistent=True`` one child serves all requests in order and is
    restarted if it dies.

    Example:
        async with ExternalObjective(["python", "my_objective.py"], space,
                                     persistent=True) as objective:
            history = await run(space, objective, 100)
    """

    def __init__(
        self,
        command: Sequence[str],
        space: SearchSpace,
        timeout: float = DEFAULT_TIMEOUT,
        persistent: bool = False,
        max_parallel: Optional[int] = None,
        env: Optional[Mapping[str, str]] = None,
        name: Optional[str] = None,
    ):
        if isinstance(command, str) or not command:
            raise ConfigError("command must be a non-empty list of arguments")
        if timeout <= 0:
            raise ConfigError(f"timeout must be positive, got {timeout}")
        if max_parallel is not None and max_parallel < 1:
            raise ConfigError(f"max_parallel must be >= 1, got {max_parallel}")
        self.command: List[str] = [str(part) for part in command]
        self.space = space
        self.arity = space.d
        self.timeout = float(timeout)
        self.persistent = persistent
        self.max_parallel = 1 if persistent else max_parallel
        self.env = dict(os.environ, **env) if env else None
        self.name = name or os.path.basename(self.command[0])

        self.process: Optional[asyncio.subprocess.Process] = None
        self._lock: Optional[asyncio.Lock] = None
        self._semaphore: Optional[asyncio.Semaphore] = None
        self._loop: Optional[asyncio.AbstractEventLoop] = None

    def _bind_loop(self) -> None:
        loop = asyncio.get_running_loop()
        if loop is not self._loop:
            self._loop = loop
            self._lock = asyncio.Lock()
            self._semaphore = (
                asyncio.Semaphore(self.max_parallel) if self.max_parallel else None
            )

    def encode_request(self, candidate: Candidate) -> bytes:
        if len(candidate) != self.space.d:
            raise ObjectiveError(f"Expected {self.space.d} values, got {len(candidate)}")
        payload = {name: _to_json(v) for name, v in zip(self.space.names, candidate)}
        return (json.dumps(payload) + "\n").encode("utf-8")

    async def evaluate(self, candidate: Candidate) -> float:
        self._bind_loop()
        request = self.encode_request(candidate)
        if self._semaphore is None:
            return await self._dispatch(request)
        async with self._semaphore:
            return await self._dispatch(request)

    async def _dispatch(self, request: bytes) -> float:
        if self.persistent:
            return await self._evaluate_persistent(request)
        return await self._evaluate_once(request)

    async def _spawn(self, stderr: Optional[int]) -> asyncio.subprocess.Process:
        try:
            return await asyncio.create_subprocess_exec(
                *self.command,
                stdin=asyncio.subprocess.PIPE,
                stdout=asyncio.subprocess.PIPE,
                stderr=stderr,
                env=self.env,
            )
        except OSError as ex:
            raise ObjectiveError(f"Cannot start {self.command[0]!r}: {ex}") from ex

    async def _evaluate_once(self, request: bytes) -> float:
        proc = await self._spawn(asyncio.subprocess.PIPE)
        try:
            stdout, stderr = await asyncio.wait_for(proc.communicate(request), self.timeout)
        except asyncio.TimeoutError:
            await _kill(proc)
            raise ObjectiveTimeoutError(
                f"{self.name} did not answer within {self.timeout:g} s"
            ) from None
        if proc.returncode != 0:
            tail = stderr.decode("utf-8", errors="replace").strip()[-500:]
            raise ObjectiveError(f"{self.name} exited with status {proc.returncode}: {tail}")
        lines = [line for line in stdout.splitlines() if line.strip()]
        if not lines:
            raise ObjectiveError(f"{self.name} produced no output")
        return parse_response(lines[0])

    async def start(self) -> None:
        """Start the persistent child if it is not running."""
        if self.process is not None and self.process.returncode is None:
            return
        # stderr is inherited so an unread pipe can never block the child.
        self.process = await self._spawn(None)
        logger.info("Started objective process %s (pid %s)", self.name, self.process.pid)

    async def _evaluate_persistent(self, request: bytes) -> float:
        assert self._lock is not None
        async with self._lock:
            if self.process is None or self.process.returncode is not None:
                if self.process is not None:
                    logger.warning(
                        "Objective process %s died (status %s); restarting",
                        self.name,
                        self.process.returncode,
                    )
                await self.start()
            proc = self.process
            assert proc is not None and proc.stdin is not None and proc.stdout is not None
            try:
                proc.stdin.write(request)
                await asyncio.wait_for(proc.stdin.drain(), self.timeout)
                raw = await asyncio.wait_for(proc.stdout.readline(), self.timeout)
            except asyncio.TimeoutError:
                await self._discard()
                raise ObjectiveTimeoutError(
                    f"{self.name} did not answer within {self.timeout:g} s"
                ) from None
            except (BrokenPipeError, ConnectionResetError) as ex:
                await self._discard()
                raise ObjectiveError(f"{self.name} closed its input: {ex}") from ex
            if not raw:
                await self._discard()
                raise ObjectiveError(f"{self.name} exited before answering")
            return parse_response(raw)

    async def _discard(self) -> None:
        if self.process is not None:
            await _kill(self.process)
            self.process = None

    async def close(self) -> None:
        """Stop the persistent child: close its input, then kill if it lingers."""
        proc, self.process = self.process, None
        if proc is None or proc.returncode is not None:
            return
        if proc.stdin is not None:
            proc.stdin.close()
        try:
            await asyncio.wait_for(proc.wait(), 5.0)
        except asyncio.TimeoutError:
            await _kill(proc)
        logger.info("Objective process %s stopped", self.name)

    def __repr__(self) -> str:
        mode = "persistent" if self.persistent else "one-shot"
        return f"ExternalObjective({self.command!r}, {mode})"


async def _kill(proc: asyncio.subprocess.Process) -> None:
    if proc.returncode is None:
        try:
            proc.kill()
        except ProcessLookupError:
            pass
        await proc.wait()


def objective_from_config(data: Mapping[str, Any], space: SearchSpace) -> Objective:
    """Build an objective from its config mapping.

    ``{"builtin": name, "negate": bool}`` selects a benchmark;
    ``{"command": [...], "timeout": s, "persistent": bool, "max_parallel": n}``
    an external process.

    Raises:
        ConfigError: If the mapping is neither form or has unknown keys
    """
    if not isinstance(data, Mapping):
        raise ConfigError("objective must be a mapping")
    if "builtin" in data:
        unknown = set(data) - {"builtin", "negate"}
        if unknown:
            raise ConfigError(f"Unknown objective keys: {sorted(unknown)}")
        objective = builtin(str(data["builtin"]), bool(data.get("negate", True)))
        if objective.arity is not None and objective.arity != space.d:
            raise ConfigError(
                f"{objective.name} needs {objective.arity} dimensions, space has {space.d}"
            )
        return objective
    if "command" in data:
        unknown = set(data) - {"command", "timeout", "persistent", "max_parallel", "env"}
        if unknown:
            raise ConfigError(f"Unknown objective keys: {sorted(unknown)}")
        command = data["command"]
        if isinstance(command, str):
            command = command.split()
        return ExternalObjective(
            command,
            space,
            timeout=float(data.get("timeout", DEFAULT_TIMEOUT)),
            persistent=bool(data.get("persistent", False)),
            max_parallel=data.get("max_parallel"),
            env=data.get("env"),
        )
    raise ConfigError("objective needs either 'builtin' or 'command'")
