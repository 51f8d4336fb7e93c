import sys
import textwrap
from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence

import numpy as np
import pytest

from wrsearch.engine import Phase, TrialRecord
from wrsearch.objectives import Objective, builtin
from wrsearch.space import Candidate, Dimension, SearchSpace, sample_candidate, substream


class FunctionObjective(Objective):
    """Objective backed by a plain Python function of the candidate values."""

    def __init__(self, func: Callable[[Sequence[Any]], float], name: str = "function"):
        self.func = func
        self.name = name
        self.calls: List[Candidate] = []

    async def evaluate(self, candidate: Candidate) -> float:
        self.calls.append(candidate)
        return float(self.func(candidate.values))


@pytest.fixture
def rng():
    """Deterministic generator for a single test."""
    return substream(20240601, "tests")


@pytest.fixture
def g6_space():
    """[-600, 600]^6, the domain of the modified Griewank benchmark."""
    return SearchSpace.uniform_box(6, -600.0, 600.0)


@pytest.fixture
def g6_objective():
    """-G6*, to be maximized."""
    return builtin("griewank_modified_6", negate=True)


@pytest.fixture
def mixed_space():
    """One dimension of every kind."""
    return SearchSpace(
        (
            Dimension.real("lr", 0.0, 1.0),
            Dimension.integer("layers", 1, 4),
            Dimension.categorical("act", ["relu", "tanh", "sigmoid"]),
        )
    )


@pytest.fixture
def function_objective():
    """Factory for objectives wrapping a Python function."""
    return FunctionObjective


@pytest.fixture
def make_trials():
    """Factory building random-search trial records without the engine."""

    def _make(space: SearchSpace, func: Callable[[Sequence[Any]], float], n: int,
              seed: int = 0) -> List[TrialRecord]:
        gen = np.random.default_rng(seed)
        trials = []
        for k in range(1, n + 1):
            candidate = sample_candidate(space, gen)
            trials.append(
                TrialRecord(
                    iteration=k,
                    candidate=candidate,
                    value=float(func(candidate.values)),
                    changed=tuple([True] * space.d),
                    phase=Phase.RS,
                )
            )
        return trials

    return _make


@pytest.fixture
def worker_command() -> List[str]:
    """Child process answering -G6* over the line protocol."""
    return [sys.executable, "-m", "wrsearch.worker", "griewank_modified_6", "--negate"]


@pytest.fixture
def stub_command(tmp_path: Path):
    """Factory writing a small Python child program and returning its command."""

    def _make(body: str, name: str = "stub.py") -> List[str]:
        script = tmp_path / name
        script.write_text(textwrap.dedent(body), encoding="utf-8")
        return [sys.executable, str(script)]

    return _make


@pytest.fixture
def campaign_dict(tmp_path: Path) -> Dict[str, Any]:
    """Small -G6* campaign writing into a temporary directory."""
    return {
        "space": [
            {"name": f"x{i}", "kind": "real", "low": -600, "high": 600} for i in range(1, 7)
        ],
        "objective": {"builtin": "griewank_modified_6", "negate": True},
        "n_total": 60,
        "n_phase1": "auto",
        "n_runs": 2,
        "base_seed": 7,
        "optimizers": ["RS", "WRS"],
        "parallelism": 2,
        "output_dir": str(tmp_path / "out"),
        "importance": {"n_trees": 8},
    }
