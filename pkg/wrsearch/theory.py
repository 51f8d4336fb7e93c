"""Per-step and n-step probabilities of hitting the global optimum.

All formulas assume countable domains with uncorrelated dimensions and the
uniform sampling law. Dimension 0 is the one that always changes.
"""

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from wrsearch.exceptions import TheoryDomainError

# Above this many dimensions products are evaluated as sums of logs.
LOG_SPACE_THRESHOLD = 50


def _whole(value: float, what: str) -> int:
    if not float(value).is_integer():
        raise ValueError(f"{what} must be whole numbers, got {value}")
    return int(value)


@dataclass(frozen=True)
class DiscreteProfile:
    """Cardinalities, change probabilities and distinct-value counts.

    Attributes:
        cards: ``|S_i|`` for every dimension, each a finite integer >= 1
        probs: Change probabilities in ``(0, 1]``; ``probs[0]`` must be 1
        distinct: ``m_i``, distinct values generated so far, ``1 <= m_i <= |S_i|``
    """

    cards: Tuple[int, ...]
    probs: Tuple[float, ...]
    distinct: Tuple[int, ...]

    def __post_init__(self) -> None:
        cards = tuple(self.cards)
        for card in cards:
            if isinstance(card, float) and not math.isfinite(card):
                raise TheoryDomainError(
                    "Probability formulas need finite cardinalities (discrete domains only)"
                )
        object.__setattr__(self, "cards", tuple(_whole(c, "Cardinalities") for c in cards))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        object.__setattr__(
            self, "distinct", tuple(_whole(m, "Distinct counts") for m in self.distinct)
        )
        if not self.cards:
            raise ValueError("A profile needs at least one dimension")
        if not len(self.cards) == len(self.probs) == len(self.distinct):
            raise ValueError("cards, probs and distinct must have the same length")
        if any(c < 1 for c in self.cards):
            raise ValueError(f"Cardinalities must be >= 1: {self.cards}")
        if any(not 0.0 < p <= 1.0 for p in self.probs):
            raise ValueError(f"Probabilities must lie in (0, 1]: {self.probs}")
        if self.probs[0] != 1.0:
            raise ValueError("The first dimension must have probability of change 1")
        if any(not 1 <= m <= c for m, c in zip(self.distinct, self.cards)):
            raise ValueError(f"Distinct counts must satisfy 1 <= m_i <= |S_i|: {self.distinct}")

    @property
    def d(self) -> int:
        return len(self.cards)


def _product(factors: np.ndarray) -> float:
    if len(factors) > LOG_SPACE_THRESHOLD:
        return float(np.exp(np.sum(np.log(factors))))
    return float(np.prod(factors))


def p_rs(profile: DiscreteProfile) -> float:
    """One-step probability that random search hits the optimum."""
    return _product(1.0 / np.asarray(profile.cards, dtype=float))


def wrs_factors(profile: DiscreteProfile) -> np.ndarray:
    """Per-dimension hit probabilities of one WRS step.

    Dimension 0 contributes ``1/|S_1|``; every other dimension mixes a fresh
    draw (``p_i/|S_i|``) with reuse of the best value among the
    ``|S_i| - m_i + 1`` candidates not yet ruled out.
    """
    cards = np.asarray(profile.cards, dtype=float)
    probs = np.asarray(profile.probs, dtype=float)
    distinct = np.asarray(profile.distinct, dtype=float)
    factors = probs / cards + (1.0 - probs) / (cards - distinct + 1.0)
    factors[0] = 1.0 / cards[0]
    return factors


def p_wrs(profile: DiscreteProfile) -> float:
    """One-step probability that weighted random search hits the optimum."""
    return _product(wrs_factors(profile))


def p_after_n(p: float, n: int) -> float:
    """Probability of at least one hit in ``n`` independent steps."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    # -expm1(n*log1p(-p)) keeps precision for tiny p.
    if p == 1.0:
        return 1.0
    return float(-math.expm1(n * math.log1p(-p)))


def expected_distinct(card: int, n: float, p: float) -> float:
    """Expected number of distinct values after ``n`` steps changing with ``p``.

    The exponent ``n * p`` is used as a real number.
    """
    if isinstance(card, float) and not math.isfinite(card):
        raise TheoryDomainError("expected_distinct needs a finite cardinality")
    card = _whole(card, "Cardinalities")
    if card < 1:
        raise ValueError("card must be >= 1")
    if n < 0:
        raise ValueError("n must be >= 0")
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    exponent = n * p
    if card == 1:
        return 1.0 if exponent > 0 else 0.0
    return float(card * -math.expm1(exponent * math.log1p(-1.0 / card)))


def dominance_holds(profile: DiscreteProfile) -> bool:
    """True when every reused dimension has seen at least two distinct values.

    Under this condition ``p_wrs(profile) >= p_rs(profile)``.
    """
    return all(m >= 2 for m in profile.distinct[1:])


def min_steps_for_distinct(p: float) -> int:
    """Smallest step count ``n`` with ``n * p > 1``."""
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    return math.floor(1.0 / p) + 1


def n_step_curve(
    profile: DiscreteProfile, n_values: Iterable[int]
) -> List[Tuple[int, float, float]]:
    """Rows ``(n, P_RS:n, P_WRS:n)`` for every requested ``n``."""
    prs, pwrs = p_rs(profile), p_wrs(profile)
    return [(n, p_after_n(prs, n), p_after_n(pwrs, n)) for n in n_values]


def simulate_p_wrs(
    profile: DiscreteProfile, n_draws: int, rng: np.random.Generator
) -> Tuple[float, float]:
    """Monte-Carlo estimate of the per-step hit probability.

    Each simulated step resamples dimension ``i`` uniformly from ``S_i``
    with probability ``p_i`` (one uniform draw per dimension) and otherwise
    picks uniformly among the ``|S_i| - m_i + 1`` values that can still be
    the optimum. Index 0 stands for the optimum in every set.

    Returns:
        ``(frequency, standard_error)`` of the hit indicator
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    hit = np.ones(n_draws, dtype=bool)
    for card, prob, distinct in zip(profile.cards, profile.probs, profile.distinct):
        resample = rng.random(n_draws) < prob
        fresh = rng.integers(0, card, size=n_draws)
        reused = rng.integers(0, card - distinct + 1, size=n_draws)
        hit &= np.where(resample, fresh, reused) == 0
    freq = float(hit.mean())
    se = math.sqrt(max(freq * (1.0 - freq), 1e-300) / n_draws)
    return freq, se


def profile_from_lists(
    cards: Sequence[float], probs: Sequence[float], distinct: Sequence[int]
) -> DiscreteProfile:
    """Build a profile, rejecting infinite cardinalities with a clear error."""
    if any(isinstance(c, float) and math.isinf(c) for c in cards):
        raise TheoryDomainError(
            "Real-interval dimensions have infinite cardinality; theory is discrete-only"
        )
    return DiscreteProfile(tuple(cards), tuple(probs), tuple(distinct))
