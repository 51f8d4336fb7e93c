"""Campaign summaries, the pooled two-sample t-test and per-value tables."""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from wrsearch.exceptions import InputDataError
from wrsearch.space import DomainKind, SearchSpace

logger = logging.getLogger(__name__)

# Continued fraction settings for the incomplete beta function.
_CF_EPS = 1e-15
_CF_TINY = 1e-300
_CF_MAX_ITER = 20000


@dataclass(frozen=True)
class CampaignSummary:
    """Best, mean and sample standard deviation of per-run best values."""

    best: float
    mean: float
    sd: float
    n_runs: int

    def as_row(self, optimizer: str) -> Dict[str, Any]:
        return {
            "optimizer": optimizer,
            "best": self.best,
            "mean": self.mean,
            "sd": self.sd,
            "n_runs": self.n_runs,
        }


@dataclass(frozen=True)
class TTestResult:
    """Pooled two-sample t-test outcome.

    ``degenerate`` is set when both samples have zero variance but different
    means, in which case ``t`` is infinite and ``p`` is 0.
    """

    t: float
    df: int
    se: float
    p: float
    degenerate: bool = False


def _finite_sample(values: Sequence[float], label: str) -> np.ndarray:
    sample = np.asarray(values, dtype=float)
    if sample.ndim != 1:
        raise InputDataError(f"{label} must be a flat list of numbers")
    if not np.all(np.isfinite(sample)):
        raise InputDataError(f"{label} contains non-finite values")
    return sample


def summarize(run_bests: Sequence[float]) -> CampaignSummary:
    """Summarize per-run best values.

    A single run has ``sd = 0``.

    Raises:
        InputDataError: If the list is empty or contains non-finite values
    """
    sample = _finite_sample(run_bests, "run_bests")
    if sample.size == 0:
        raise InputDataError("Cannot summarize an empty list of runs")
    sd = float(np.std(sample, ddof=1)) if sample.size > 1 else 0.0
    return CampaignSummary(
        best=float(sample.max()),
        mean=float(sample.mean()),
        sd=sd,
        n_runs=int(sample.size),
    )


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction of the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _CF_TINY else _CF_TINY)
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        for aa in (
            m * (b - m) * x / ((qam + m2) * (a + m2)),
            -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2)),
        ):
            d = 1.0 + aa * d
            d = 1.0 / (d if abs(d) > _CF_TINY else _CF_TINY)
            c = 1.0 + aa / c
            c = c if abs(c) > _CF_TINY else _CF_TINY
            delta = d * c
            h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    logger.warning("Incomplete beta did not converge for a=%g b=%g x=%g", a, b, x)
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_two_sided(t: float, df: float) -> float:
    """Two-sided tail probability ``P(|T| >= |t|)``."""
    if df <= 0:
        raise ValueError(f"df must be positive, got {df}")
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    # Evaluated directly in the tails so tiny p-values keep their precision.
    return min(1.0, betainc(df / 2.0, 0.5, df / (df + t * t)))


def t_cdf(t: float, df: float) -> float:
    """Student-t cumulative distribution function.

    Uses ``I_{df/(df+t^2)}(df/2, 1/2)`` evaluated by continued fraction; the
    relative precision is about 1e-14 away from the extreme tails.
    """
    tail = 0.5 * t_two_sided(t, df)
    return tail if t < 0 else 1.0 - tail


def pooled_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Student's pooled two-sample t-test with a two-sided p-value.

    ``df = len(a) + len(b) - 2`` and ``t`` is positive when ``a`` has the
    larger mean.

    Args:
        a: First sample, at least two values
        b: Second sample, at least two values

    Returns:
        t statistic, degrees of freedom, standard error and p-value

    Raises:
        InputDataError: If a sample has fewer than two values
    """
    xa, xb = _finite_sample(a, "a"), _finite_sample(b, "b")
    na, nb = xa.size, xb.size
    if na < 2 or nb < 2:
        raise InputDataError(f"Both samples need at least two values, got {na} and {nb}")
    df = na + nb - 2
    ss = float(np.sum((xa - xa.mean()) ** 2) + np.sum((xb - xb.mean()) ** 2))
    se = math.sqrt(ss / df * (1.0 / na + 1.0 / nb))
    diff = float(xa.mean() - xb.mean())

    if se == 0.0:
        if diff == 0.0:
            return TTestResult(t=0.0, df=df, se=0.0, p=1.0)
        logger.warning("Zero pooled variance with different means; t-test is degenerate")
        return TTestResult(t=math.copysign(math.inf, diff), df=df, se=0.0, p=0.0,
                           degenerate=True)
    t = diff / se
    return TTestResult(t=t, df=df, se=se, p=t_two_sided(t, df))


@dataclass(frozen=True)
class CrossTabCell:
    row_value: Any
    col_value: Any
    count: int
    mean: float
    sd: float


def cross_tabulate(
    trials: Sequence[Any], space: SearchSpace, row_dim: str, col_dim: str
) -> List[CrossTabCell]:
    """Objective statistics for every observed value pair of two dimensions.

    Only successful trials count. Cells are ordered by the domain order of
    the row value, then the column value.

    Raises:
        InputDataError: If a dimension is real-valued or no trial succeeded
    """
    rows, cols = space.index(row_dim), space.index(col_dim)
    for index in (rows, cols):
        if space[index].kind is DomainKind.REAL:
            raise InputDataError(
                f"Dimension '{space[index].name}' is real-valued; cross tables need finite domains"
            )
    groups: Dict[Tuple[Any, Any], List[float]] = defaultdict(list)
    for trial in trials:
        if trial.failed:
            continue
        groups[(trial.candidate[rows], trial.candidate[cols])].append(trial.value)
    if not groups:
        raise InputDataError("No successful trials to tabulate")

    def order(key: Tuple[Any, Any]) -> Tuple[float, float]:
        return space[rows].encode(key[0]), space[cols].encode(key[1])

    cells = []
    for key in sorted(groups, key=order):
        values = np.asarray(groups[key], dtype=float)
        cells.append(
            CrossTabCell(
                row_value=key[0],
                col_value=key[1],
                count=int(values.size),
                mean=float(values.mean()),
                sd=float(np.std(values, ddof=1)) if values.size > 1 else 0.0,
            )
        )
    return cells
