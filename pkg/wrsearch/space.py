"""Search spaces, candidate points and seeded sampling."""

import math
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from wrsearch.exceptions import SpaceConfigurationError

# Cardinality reported for real intervals.
INFINITE = math.inf

Number = Union[int, float]


class DomainKind(str, Enum):
    """Kinds of dimension domains."""

    REAL = "real"
    INTEGER = "integer"
    CATEGORICAL = "categorical"


def _is_integral(value: Any) -> bool:
    if isinstance(value, bool):
        return False
    if isinstance(value, (int, np.integer)):
        return True
    return isinstance(value, float) and value.is_integer()


def _is_real(value: Any) -> bool:
    if isinstance(value, bool):
        return False
    return isinstance(value, (int, float, np.integer, np.floating)) and math.isfinite(value)


@dataclass(frozen=True)
class Dimension:
    """One axis of a search space: a domain plus its sampling law.

    Use the :meth:`real`, :meth:`integer` and :meth:`categorical` constructors
    rather than filling the fields by hand.

    Attributes:
        name: Identifier, unique within a space
        kind: Domain kind
        low: Lower bound for interval domains (inclusive)
        high: Upper bound for interval domains (inclusive)
        values: Ordered value set for categorical domains
        distribution: Sampling law; only ``"uniform"`` is implemented
    """

    name: str
    kind: DomainKind
    low: Optional[Number] = None
    high: Optional[Number] = None
    values: Tuple[Any, ...] = ()
    distribution: str = "uniform"

    def __post_init__(self) -> None:
        if not isinstance(self.name, str) or not self.name:
            raise SpaceConfigurationError(f"Invalid dimension name: {self.name!r}")
        if self.distribution != "uniform":
            raise SpaceConfigurationError(
                f"Unsupported distribution {self.distribution!r} for '{self.name}'"
            )
        if self.kind is DomainKind.CATEGORICAL:
            object.__setattr__(self, "values", tuple(self.values))
            if not self.values:
                raise SpaceConfigurationError(
                    f"Categorical dimension '{self.name}' needs at least one value"
                )
            try:
                unique = len(set(self.values))
            except TypeError as ex:
                raise SpaceConfigurationError(
                    f"Categorical values of '{self.name}' must be hashable"
                ) from ex
            if unique != len(self.values):
                raise SpaceConfigurationError(
                    f"Duplicate values in categorical dimension '{self.name}'"
                )
            return

        if self.low is None or self.high is None:
            raise SpaceConfigurationError(f"Dimension '{self.name}' needs low and high")
        if self.kind is DomainKind.INTEGER:
            if not (_is_integral(self.low) and _is_integral(self.high)):
                raise SpaceConfigurationError(
                    f"Bounds of integer dimension '{self.name}' must be integers"
                )
            object.__setattr__(self, "low", int(self.low))
            object.__setattr__(self, "high", int(self.high))
        else:
            if not (_is_real(self.low) and _is_real(self.high)):
                raise SpaceConfigurationError(
                    f"Bounds of real dimension '{self.name}' must be finite numbers"
                )
            object.__setattr__(self, "low", float(self.low))
            object.__setattr__(self, "high", float(self.high))
        if self.low > self.high:
            raise SpaceConfigurationError(
                f"low ({self.low}) > high ({self.high}) for dimension '{self.name}'"
            )

    @classmethod
    def real(cls, name: str, low: float, high: float) -> "Dimension":
        return cls(name, DomainKind.REAL, low=low, high=high)

    @classmethod
    def integer(cls, name: str, low: int, high: int) -> "Dimension":
        return cls(name, DomainKind.INTEGER, low=low, high=high)

    @classmethod
    def categorical(cls, name: str, values: Sequence[Any]) -> "Dimension":
        return cls(name, DomainKind.CATEGORICAL, values=tuple(values))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Dimension":
        """Build a dimension from its config mapping.

        Args:
            data: Mapping with ``name``, ``kind`` and either ``low``/``high``
                or ``values``

        Returns:
            The validated dimension

        Raises:
            SpaceConfigurationError: If the mapping is incomplete or invalid
        """
        if not isinstance(data, Mapping):
            raise SpaceConfigurationError(f"Dimension entry must be a mapping: {data!r}")
        allowed = {"name", "kind", "low", "high", "values", "distribution"}
        unknown = set(data) - allowed
        if unknown:
            raise SpaceConfigurationError(f"Unknown dimension keys: {sorted(unknown)}")
        try:
            kind = DomainKind(data.get("kind"))
        except ValueError as ex:
            raise SpaceConfigurationError(
                f"Unknown kind {data.get('kind')!r} for dimension {data.get('name')!r}"
            ) from ex
        return cls(
            name=data.get("name"),
            kind=kind,
            low=data.get("low"),
            high=data.get("high"),
            values=tuple(data.get("values") or ()),
            distribution=data.get("distribution", "uniform"),
        )

    def to_dict(self) -> Dict[str, Any]:
        if self.kind is DomainKind.CATEGORICAL:
            return {"name": self.name, "kind": self.kind.value, "values": list(self.values)}
        return {"name": self.name, "kind": self.kind.value, "low": self.low, "high": self.high}

    @property
    def is_finite(self) -> bool:
        return self.kind is not DomainKind.REAL

    def encode(self, value: Any) -> float:
        """Map a domain value onto the real line used by the tree ensemble.

        Categorical values map to their index in :attr:`values`.
        """
        if self.kind is DomainKind.CATEGORICAL:
            return float(self.values.index(value))
        return float(value)


def cardinality(dim: Dimension) -> Number:
    """Return ``|S_i|`` for a dimension, or :data:`INFINITE` for reals."""
    if dim.kind is DomainKind.CATEGORICAL:
        return len(dim.values)
    if dim.kind is DomainKind.INTEGER:
        return dim.high - dim.low + 1
    return INFINITE


def contains(dim: Dimension, value: Any) -> bool:
    """Domain membership predicate."""
    if dim.kind is DomainKind.CATEGORICAL:
        try:
            return value in dim.values
        except TypeError:
            return False
    if dim.kind is DomainKind.INTEGER:
        return _is_integral(value) and dim.low <= value <= dim.high
    return _is_real(value) and dim.low <= value <= dim.high


def sample_dimension(dim: Dimension, rng: np.random.Generator) -> Any:
    """Draw one value of ``dim`` from its (uniform) law.

    Args:
        dim: Dimension to sample
        rng: Generator owned by the calling run

    Returns:
        A Python scalar inside the dimension's domain
    """
    if dim.kind is DomainKind.CATEGORICAL:
        return dim.values[int(rng.integers(len(dim.values)))]
    if dim.kind is DomainKind.INTEGER:
        return int(rng.integers(dim.low, dim.high, endpoint=True))
    return float(rng.uniform(dim.low, dim.high))


@dataclass(frozen=True)
class Candidate:
    """One argument tuple, values in dimension order."""

    values: Tuple[Any, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(self.values))

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, index: int) -> Any:
        return self.values[index]

    def __iter__(self) -> Iterator[Any]:
        return iter(self.values)


@dataclass(frozen=True)
class SearchSpace:
    """Ordered, named dimensions. Order indexes every per-dimension array."""

    dimensions: Tuple[Dimension, ...]
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        dims = tuple(self.dimensions)
        object.__setattr__(self, "dimensions", dims)
        if not dims:
            raise SpaceConfigurationError("A search space needs at least one dimension")
        names = [d.name for d in dims]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise SpaceConfigurationError(f"Duplicate dimension names: {duplicates}")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @classmethod
    def from_config(cls, entries: Sequence[Mapping[str, Any]]) -> "SearchSpace":
        if not isinstance(entries, Sequence) or isinstance(entries, (str, bytes)):
            raise SpaceConfigurationError("space must be a list of dimension entries")
        return cls(tuple(Dimension.from_dict(e) for e in entries))

    @classmethod
    def uniform_box(cls, d: int, low: float, high: float, prefix: str = "x") -> "SearchSpace":
        """Space of ``d`` real dimensions named ``x1..xd`` over ``[low, high]``."""
        return cls(tuple(Dimension.real(f"{prefix}{i + 1}", low, high) for i in range(d)))

    @property
    def d(self) -> int:
        return len(self.dimensions)

    @property
    def names(self) -> List[str]:
        return [dim.name for dim in self.dimensions]

    def __len__(self) -> int:
        return len(self.dimensions)

    def __iter__(self) -> Iterator[Dimension]:
        return iter(self.dimensions)

    def __getitem__(self, index: int) -> Dimension:
        return self.dimensions[index]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SpaceConfigurationError(f"Unknown dimension: {name!r}") from None

    def contains(self, candidate: Candidate) -> bool:
        return len(candidate) == self.d and all(
            contains(dim, value) for dim, value in zip(self.dimensions, candidate)
        )

    def as_dict(self, candidate: Candidate) -> Dict[str, Any]:
        return dict(zip(self.names, candidate.values))

    def from_mapping(self, mapping: Mapping[str, Any]) -> Candidate:
        """Rebuild a candidate from a name -> value mapping (trial logs)."""
        try:
            return Candidate(tuple(mapping[name] for name in self.names))
        except KeyError as ex:
            raise SpaceConfigurationError(f"Missing value for dimension {ex.args[0]!r}") from None

    def encode(self, candidates: Sequence[Candidate]) -> np.ndarray:
        """Encode candidates as an ``(n, d)`` float matrix."""
        matrix = np.empty((len(candidates), self.d), dtype=float)
        for row, cand in enumerate(candidates):
            for col, dim in enumerate(self.dimensions):
                matrix[row, col] = dim.encode(cand[col])
        return matrix

    def to_config(self) -> List[Dict[str, Any]]:
        return [dim.to_dict() for dim in self.dimensions]


def sample_candidate(space: SearchSpace, rng: np.random.Generator) -> Candidate:
    """Sample every dimension in order from one stream."""
    return Candidate(tuple(sample_dimension(dim, rng) for dim in space))


def stable_key(label: str) -> int:
    """Platform-independent integer key for a label (CRC-32)."""
    return zlib.crc32(label.encode("utf-8"))


def substream(base_seed: int, *key: Union[int, str]) -> np.random.Generator:
    """Derive an independent PCG64 generator for ``(base_seed, *key)``.

    String key parts go through :func:`stable_key`, so a campaign run can be
    replayed from the base seed, the optimizer name and the run index alone.

    Args:
        base_seed: Non-negative 64-bit campaign seed
        key: Purpose labels and indices identifying the stream

    Returns:
        A fresh generator; distinct keys give statistically independent streams
    """
    spawn_key = tuple(stable_key(k) if isinstance(k, str) else int(k) for k in key)
    seq = np.random.SeedSequence(int(base_seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.PCG64(seq))
