"""Main-effect importance of each dimension from a regression-tree ensemble.

The ensemble is fit on ``(candidate -> objective value)`` pairs. For every
tree the prediction surface is piecewise constant on axis-aligned boxes, so
the functional ANOVA main effect of a dimension can be integrated exactly
from the leaf boxes and the uniform measure of each domain. Per-tree variance
fractions are averaged over the trees whose prediction is not constant.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from wrsearch.exceptions import ConstantObjectiveError, InputDataError
from wrsearch.space import DomainKind, SearchSpace

if TYPE_CHECKING:
    from wrsearch.engine import RunHistory, TrialRecord

logger = logging.getLogger(__name__)

MIN_TRIALS = 10

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


@dataclass(frozen=True)
class EnsembleSettings:
    """Tree ensemble hyperparameters.

    Attributes:
        n_trees: Number of trees
        max_depth: Depth limit, ``None`` for unlimited
        min_samples_leaf: Minimum (bootstrap) samples in every leaf
        bootstrap: Resample the training set per tree
        max_features: Fraction of dimensions considered per split, ``None``
            considers all of them
    """

    n_trees: int = 32
    max_depth: Optional[int] = None
    min_samples_leaf: int = 2
    bootstrap: bool = True
    max_features: Optional[float] = None

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_features is not None and not 0.0 < self.max_features <= 1.0:
            raise ValueError("max_features must be in (0, 1]")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EnsembleSettings":
        allowed = {"n_trees", "max_depth", "min_samples_leaf", "bootstrap", "max_features"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"Unknown importance settings: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class WeightReport:
    """Main-effect weights, in percent of total prediction variance.

    Weights are not renormalized: whatever is missing from 100 is variance
    attributed to interactions.
    """

    weights: Tuple[float, ...]
    n_samples: int
    model_meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "weights", weights)
        if not weights:
            raise ValueError("WeightReport needs at least one weight")
        if not all(np.isfinite(w) and w >= 0.0 for w in weights):
            raise ValueError(f"Weights must be finite and non-negative: {weights}")

    @property
    def d(self) -> int:
        return len(self.weights)

    def most_important(self) -> int:
        return int(np.argmax(self.weights))


@dataclass
class _Split:
    feature: int
    sse: float
    threshold: float = np.nan
    left_mask: Optional[np.ndarray] = None


@dataclass
class _Leaf:
    value: float
    lower: np.ndarray
    upper: np.ndarray
    masks: Dict[int, np.ndarray]


class RegressionTree:
    """CART-style regression tree over an encoded search space.

    Numeric dimensions split on midpoints between observed values
    (``x <= threshold`` goes left); categorical dimensions split on a subset
    of categories, found by ordering categories by their mean response.
    """

    def __init__(self, space: SearchSpace, settings: EnsembleSettings, rng: np.random.Generator):
        self.space = space
        self.settings = settings
        self.rng = rng
        self._categorical = np.array(
            [dim.kind is DomainKind.CATEGORICAL for dim in space], dtype=bool
        )
        self._n_categories = [len(dim.values) if dim.kind is DomainKind.CATEGORICAL else 0
                              for dim in space]
        # Node arrays; a feature of -1 marks a leaf.
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left_mask: List[Optional[np.ndarray]] = []
        self.children: List[Tuple[int, int]] = []
        self.value: List[float] = []
        self.leaves: List[_Leaf] = []
        self.depth = 0

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RegressionTree":
        """Grow the tree on an encoded matrix ``X`` and targets ``y``."""
        d = self.space.d
        masks = {j: np.ones(self._n_categories[j], dtype=bool)
                 for j in range(d) if self._categorical[j]}
        root = self._new_node(float(np.mean(y)))
        stack = [(root, np.arange(len(y)), 0, np.full(d, -np.inf), np.full(d, np.inf), masks)]
        while stack:
            node, idx, depth, lower, upper, node_masks = stack.pop()
            self.depth = max(self.depth, depth)
            split = None
            if self.settings.max_depth is None or depth < self.settings.max_depth:
                split = self._best_split(X[idx], y[idx], node_masks)
            if split is None:
                self.leaves.append(_Leaf(self.value[node], lower, upper, node_masks))
                continue

            column = X[idx, split.feature]
            if split.left_mask is not None:
                go_left = split.left_mask[column.astype(int)]
            else:
                go_left = column <= split.threshold
            left_idx, right_idx = idx[go_left], idx[~go_left]
            left = self._new_node(float(np.mean(y[left_idx])))
            right = self._new_node(float(np.mean(y[right_idx])))
            self.feature[node] = split.feature
            self.threshold[node] = split.threshold
            self.left_mask[node] = split.left_mask
            self.children[node] = (left, right)

            left_lower, left_upper = lower.copy(), upper.copy()
            right_lower, right_upper = lower.copy(), upper.copy()
            left_masks, right_masks = dict(node_masks), dict(node_masks)
            if split.left_mask is not None:
                parent_mask = node_masks[split.feature]
                left_masks[split.feature] = parent_mask & split.left_mask
                right_masks[split.feature] = parent_mask & ~split.left_mask
            else:
                left_upper[split.feature] = split.threshold
                right_lower[split.feature] = split.threshold
            stack.append((right, right_idx, depth + 1, right_lower, right_upper, right_masks))
            stack.append((left, left_idx, depth + 1, left_lower, left_upper, left_masks))
        return self

    def _new_node(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left_mask.append(None)
        self.children.append((-1, -1))
        self.value.append(value)
        return len(self.value) - 1

    def _candidate_features(self) -> np.ndarray:
        d = self.space.d
        if self.settings.max_features is None:
            return np.arange(d)
        k = max(1, int(round(self.settings.max_features * d)))
        return np.sort(self.rng.choice(d, size=k, replace=False))

    def _best_split(
        self, X: np.ndarray, y: np.ndarray, masks: Dict[int, np.ndarray]
    ) -> Optional[_Split]:
        n = len(y)
        min_leaf = self.settings.min_samples_leaf
        if n < 2 * min_leaf or np.ptp(y) == 0.0:
            return None
        yc = y - y.mean()
        parent_sse = float(np.dot(yc, yc))
        best: Optional[_Split] = None

        features = self._candidate_features()
        numeric = [f for f in features if not self._categorical[f]]
        if numeric:
            values = X[:, numeric]
            order = np.argsort(values, axis=0, kind="stable")
            xs = np.take_along_axis(values, order, axis=0)
            sse = _split_sse(yc[order], min_leaf)
            sse[xs[:-1] >= xs[1:]] = np.inf
            row, col = np.unravel_index(int(np.argmin(sse)), sse.shape)
            if np.isfinite(sse[row, col]):
                threshold = 0.5 * (xs[row, col] + xs[row + 1, col])
                best = _Split(int(numeric[col]), float(sse[row, col]), threshold=float(threshold))

        for f in features:
            if not self._categorical[f]:
                continue
            split = self._categorical_split(X[:, f].astype(int), yc, f, masks[f], min_leaf)
            if split is not None and (best is None or split.sse < best.sse):
                best = split

        if best is None or best.sse >= parent_sse * (1.0 - 1e-12):
            return None
        return best

    def _categorical_split(
        self, codes: np.ndarray, yc: np.ndarray, feature: int, allowed: np.ndarray, min_leaf: int
    ) -> Optional[_Split]:
        n_cat = self._n_categories[feature]
        counts = np.bincount(codes, minlength=n_cat)
        present = np.flatnonzero(counts)
        if len(present) < 2:
            return None
        means = np.bincount(codes, weights=yc, minlength=n_cat)[present] / counts[present]
        ranked = present[np.argsort(means, kind="stable")]
        rank = np.full(n_cat, -1)
        rank[ranked] = np.arange(len(ranked))

        sample_rank = rank[codes]
        order = np.argsort(sample_rank, kind="stable")
        ranks_sorted = sample_rank[order]
        sse = _split_sse(yc[order][:, None], min_leaf)[:, 0]
        sse[ranks_sorted[:-1] >= ranks_sorted[1:]] = np.inf
        k = int(np.argmin(sse))
        if not np.isfinite(sse[k]):
            return None
        left_mask = np.zeros(n_cat, dtype=bool)
        left_mask[ranked[: ranks_sorted[k] + 1]] = True
        # Unobserved categories follow the larger child.
        absent = allowed & (counts == 0)
        if k + 1 >= len(codes) - (k + 1):
            left_mask |= absent
        return _Split(feature, float(sse[k]), left_mask=left_mask)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.empty(len(X))
        for row, x in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                f = self.feature[node]
                mask = self.left_mask[node]
                go_left = mask[int(x[f])] if mask is not None else x[f] <= self.threshold[node]
                node = self.children[node][0 if go_left else 1]
            out[row] = self.value[node]
        return out

    def variance_decomposition(self) -> Tuple[float, np.ndarray]:
        """Exact total variance and per-dimension main-effect variances.

        Returns:
            ``(total, main)`` where ``main[i]`` is the variance of the marginal
            prediction over dimension ``i`` under the uniform law of every
            domain
        """
        d = self.space.d
        values = np.array([leaf.value for leaf in self.leaves])
        lower = np.array([leaf.lower for leaf in self.leaves])
        upper = np.array([leaf.upper for leaf in self.leaves])
        fractions = np.empty((len(self.leaves), d))
        for j, dim in enumerate(self.space):
            if self._categorical[j]:
                fractions[:, j] = [leaf.masks[j].sum() / self._n_categories[j]
                                   for leaf in self.leaves]
            else:
                fractions[:, j] = _interval_measure(dim, lower[:, j], upper[:, j])

        volume = np.prod(fractions, axis=1)
        mean = float(np.dot(volume, values))
        total = float(np.dot(volume, (values - mean) ** 2))
        main = np.zeros(d)
        if len(self.leaves) == 1:
            return total, main

        for i, dim in enumerate(self.space):
            others = np.prod(np.delete(fractions, i, axis=1), axis=1)
            if self._categorical[i]:
                contains = np.array([leaf.masks[i] for leaf in self.leaves])
                cell_weight = np.full(self._n_categories[i], 1.0 / self._n_categories[i])
            else:
                cuts = np.unique(np.concatenate(
                    [[-np.inf, np.inf], [self.threshold[n] for n, f in enumerate(self.feature)
                                         if f == i]]
                ))
                cell_lo, cell_hi = cuts[:-1], cuts[1:]
                cell_weight = _interval_measure(dim, cell_lo, cell_hi)
                contains = (lower[:, i, None] <= cell_lo) & (cell_hi <= upper[:, i, None])
            marginal = (values * others) @ contains
            main[i] = float(np.dot(cell_weight, (marginal - mean) ** 2))
        return total, main


def _split_sse(ys: np.ndarray, min_leaf: int) -> np.ndarray:
    """Children SSE for every cut position of column-sorted, centred targets.

    Row ``k`` is the cut between sorted positions ``k`` and ``k + 1``.
    """
    n = ys.shape[0]
    left_sum = np.cumsum(ys, axis=0)[:-1]
    left_sq = np.cumsum(ys ** 2, axis=0)[:-1]
    total_sum = ys.sum(axis=0)
    total_sq = (ys ** 2).sum(axis=0)
    k = np.arange(1, n, dtype=float)[:, None]
    right_sum = total_sum - left_sum
    right_sq = total_sq - left_sq
    sse = (left_sq - left_sum ** 2 / k) + (right_sq - right_sum ** 2 / (n - k))
    sse = np.maximum(sse, 0.0)
    too_small = (k < min_leaf) | (n - k < min_leaf)
    return np.where(too_small, np.inf, sse)


def _interval_measure(dim: Any, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Uniform-law probability of ``a < x <= b`` inside a numeric domain."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if dim.kind is DomainKind.INTEGER:
        hi = np.floor(np.minimum(b, dim.high))
        lo = np.floor(np.maximum(a, dim.low - 1))
        return np.clip(hi - lo, 0.0, None) / (dim.high - dim.low + 1)
    if dim.high == dim.low:
        return ((a < dim.low) & (dim.low <= b)).astype(float)
    hi = np.minimum(b, dim.high)
    lo = np.maximum(a, dim.low)
    return np.clip(hi - lo, 0.0, None) / (dim.high - dim.low)


class TreeEnsemble:
    """Bagged regression trees sharing one search space."""

    def __init__(self, space: SearchSpace, settings: Optional[EnsembleSettings] = None):
        self.space = space
        self.settings = settings or EnsembleSettings()
        self.trees: List[RegressionTree] = []
        self.n_samples = 0

    def fit(self, X: np.ndarray, y: np.ndarray, seed: SeedLike = 0) -> "TreeEnsemble":
        rng = np.random.default_rng(seed)
        n = len(y)
        self.n_samples = n
        self.trees = []
        for _ in range(self.settings.n_trees):
            idx = rng.integers(0, n, size=n) if self.settings.bootstrap else np.arange(n)
            tree = RegressionTree(self.space, self.settings, rng)
            self.trees.append(tree.fit(X[idx], y[idx]))
        logger.debug("Fitted %d trees on %d samples", len(self.trees), n)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.mean([tree.predict(X) for tree in self.trees], axis=0)

    def meta(self) -> Dict[str, Any]:
        depths = [tree.depth for tree in self.trees]
        return {
            "n_trees": len(self.trees),
            "depth_min": int(min(depths)),
            "depth_max": int(max(depths)),
            "depth_mean": float(np.mean(depths)),
            "leaves_mean": float(np.mean([tree.n_leaves for tree in self.trees])),
        }


def _training_data(
    trials: Sequence["TrialRecord"], space: SearchSpace
) -> Tuple[np.ndarray, np.ndarray]:
    usable = [t for t in trials if not t.failed]
    if len(usable) < MIN_TRIALS:
        raise InputDataError(
            f"Importance estimation needs at least {MIN_TRIALS} successful trials, "
            f"got {len(usable)}"
        )
    y = np.array([t.value for t in usable], dtype=float)
    if np.ptp(y) == 0.0:
        raise ConstantObjectiveError("All objective values are identical")
    return space.encode([t.candidate for t in usable]), y


def fit_trials(
    trials: Sequence["TrialRecord"],
    space: SearchSpace,
    settings: Optional[EnsembleSettings] = None,
    seed: SeedLike = 0,
) -> TreeEnsemble:
    """Fit an ensemble on the successful trials of a trial list.

    Raises:
        InputDataError: Fewer than ten successful trials
        ConstantObjectiveError: Every objective value is the same
    """
    X, y = _training_data(trials, space)
    return TreeEnsemble(space, settings).fit(X, y, seed=seed)


def fit_ensemble(
    history: "RunHistory", settings: Optional[EnsembleSettings] = None, seed: SeedLike = 0
) -> TreeEnsemble:
    """Fit the importance model on a run's trial history."""
    return fit_trials(history.trials, history.space, settings, seed)


def main_effect_weights(ensemble: TreeEnsemble, space: SearchSpace) -> WeightReport:
    """Average per-tree main-effect variance fractions, in percent.

    Raises:
        ConstantObjectiveError: If every tree predicts a constant
    """
    if ensemble.space.names != space.names:
        raise ValueError("Ensemble was fit on a different search space")
    fractions = []
    for tree in ensemble.trees:
        total, main = tree.variance_decomposition()
        if total > 0.0:
            fractions.append(main / total)
    if not fractions:
        raise ConstantObjectiveError("The fitted model has zero variance")
    weights = 100.0 * np.mean(fractions, axis=0)
    meta = ensemble.meta()
    meta["trees_used"] = len(fractions)
    return WeightReport(tuple(float(w) for w in weights), ensemble.n_samples, meta)


def estimate_weights(
    trials: Sequence["TrialRecord"],
    space: SearchSpace,
    settings: Optional[EnsembleSettings] = None,
    seed: SeedLike = 0,
) -> WeightReport:
    """Fit an ensemble on ``trials`` and return its main-effect weights."""
    ensemble = fit_trials(trials, space, settings, seed)
    report = main_effect_weights(ensemble, space)
    logger.info(
        "Importance weights from %d trials: %s",
        report.n_samples,
        ", ".join(f"{n}={w:.2f}" for n, w in zip(space.names, report.weights)),
    )
    return report
