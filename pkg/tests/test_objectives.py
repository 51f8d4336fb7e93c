import asyncio
import math
import time

import numpy as np
import pytest

from wrsearch.engine import random_search
from wrsearch.exceptions import ConfigError, ObjectiveError, ObjectiveTimeoutError
from wrsearch.objectives import (
    BUILTINS,
    BuiltinObjective,
    ExternalObjective,
    builtin,
    griewank,
    griewank_modified_6,
    objective_from_config,
    parse_response,
)
from wrsearch.space import Candidate, SearchSpace, sample_candidate, substream


def griewank_reference(x, weights=None):
    """Loop-based evaluation used as an independent oracle."""
    total, product = 0.0, 1.0
    for i, xi in enumerate(x, start=1):
        w = 1.0 / 4000.0 if weights is None else weights(i)
        total += w * xi * xi
        product *= math.cos(xi / math.sqrt(i))
    return 1.0 + total - product


class TestGriewank:
    """Test cases for the Griewank function."""

    @pytest.mark.parametrize("d", [1, 2, 6, 30])
    def test_zero_is_zero(self, d):
        """Test G_d(0) = 0 exactly."""
        assert griewank(np.zeros(d)) == 0.0

    def test_one_dimensional_pi(self):
        """Test G_1(pi) = 2 + pi^2/4000."""
        assert griewank([math.pi]) == pytest.approx(2.0 + math.pi**2 / 4000.0, rel=1e-14)

    def test_matches_reference(self, rng):
        """Test random points against the loop implementation."""
        points = rng.uniform(-600, 600, size=(200, 6))
        values = griewank(points, 6)
        for x, v in zip(points, values):
            assert v == pytest.approx(griewank_reference(x), rel=1e-12, abs=1e-12)

    def test_dimension_check(self):
        """Test a declared dimension must match."""
        with pytest.raises(ValueError):
            griewank([1.0, 2.0], d=3)


class TestGriewankModified:
    """Test cases for the modified six-dimensional Griewank function."""

    def test_zero_is_zero(self):
        """Test G6*(0) = 0 exactly."""
        assert griewank_modified_6(np.zeros(6)) == 0.0

    def test_first_quadratic_term_vanishes(self):
        """Test x1 only enters through the cosine."""
        value = griewank_modified_6([600.0, 0, 0, 0, 0, 0])
        assert value == pytest.approx(1.0 - math.cos(600.0), rel=1e-14)
        assert value == pytest.approx(1.99914, abs=1e-4)

    def test_last_dimension(self):
        """Test (0, ..., 0, 600) = 451 - cos(600 / sqrt(6))."""
        value = griewank_modified_6([0, 0, 0, 0, 0, 600.0])
        assert value == pytest.approx(451.0 - math.cos(600.0 / math.sqrt(6.0)), rel=1e-14)

    def test_matches_reference(self, rng):
        """Test random points against the loop implementation."""
        points = rng.uniform(-600, 600, size=(200, 6))
        values = griewank_modified_6(points)
        for x, v in zip(points, values):
            expected = griewank_reference(x, weights=lambda i: (i - 1) / 4000.0)
            assert v == pytest.approx(expected, rel=1e-12, abs=1e-12)

    def test_no_sample_beats_optimum(self, rng):
        """Test -G6* never exceeds 0 on random samples."""
        points = rng.uniform(-600, 600, size=(100000, 6))
        assert np.max(-griewank_modified_6(points)) <= 0.0

    def test_needs_six_coordinates(self):
        """Test arity is enforced."""
        with pytest.raises(ValueError):
            griewank_modified_6([0.0] * 5)


class TestBuiltinObjective:
    """Test cases for in-process objectives."""

    @pytest.mark.asyncio
    async def test_negation(self):
        """Test the negated objective returns -f."""
        objective = builtin("griewank_modified_6", negate=True)
        x = Candidate((600.0, 0, 0, 0, 0, 0))
        assert await objective.evaluate(x) == pytest.approx(-(1.0 - math.cos(600.0)))

    @pytest.mark.asyncio
    async def test_argbest_invariant_under_negation(self, g6_space, rng):
        """Test maximizing -f and minimizing f pick the same trial."""
        neg, pos = builtin("griewank_modified_6"), builtin("griewank_modified_6", negate=False)
        candidates = [sample_candidate(g6_space, rng) for _ in range(100)]
        neg_values = [await neg.evaluate(c) for c in candidates]
        pos_values = [await pos.evaluate(c) for c in candidates]
        assert int(np.argmax(neg_values)) == int(np.argmin(pos_values))

    @pytest.mark.asyncio
    async def test_wrong_arity_is_evaluation_error(self):
        """Test a short candidate fails as an objective error."""
        with pytest.raises(ObjectiveError):
            await builtin("griewank_modified_6").evaluate(Candidate((0.0,)))

    def test_unknown_builtin(self):
        """Test unknown names are configuration errors."""
        with pytest.raises(ConfigError):
            builtin("rastrigin")

    def test_registry(self):
        """Test both benchmarks are registered."""
        assert set(BUILTINS) == {"griewank", "griewank_modified_6"}
        assert isinstance(builtin("griewank"), BuiltinObjective)

    def test_batch_call(self):
        """Test synchronous evaluation over a batch of points."""
        values = builtin("griewank_modified_6")(np.zeros((3, 6)))
        np.testing.assert_array_equal(values, [0.0, 0.0, 0.0])


class TestParseResponse:
    """Test cases for reading a child's answer."""

    def test_value(self):
        """Test a well-formed response."""
        assert parse_response('{"value": 1.5}\n') == 1.5

    @pytest.mark.parametrize(
        "raw",
        ["", "not json", "[1, 2]", '{"result": 1}', '{"value": "1"}', '{"value": true}',
         '{"value": NaN}', '{"error": "out of memory"}'],
    )
    def test_malformed(self, raw):
        """Test every malformed response is an objective error."""
        with pytest.raises(ObjectiveError):
            parse_response(raw)


class TestExternalObjective:
    """Test cases for child-process objectives."""

    @pytest.mark.asyncio
    async def test_echo_stub(self, stub_command):
        """Test a stub answering a constant."""
        command = stub_command(
            """
            import sys
            sys.stdin.readline()
            print('{"value": 1.0}')
            """
        )
        objective = ExternalObjective(command, SearchSpace.uniform_box(2, 0, 1), timeout=30)
        assert await objective.evaluate(Candidate((0.1, 0.2))) == 1.0

    @pytest.mark.asyncio
    async def test_request_format(self, stub_command, mixed_space):
        """Test the request maps dimension names to values."""
        command = stub_command(
            """
            import json, sys
            request = json.loads(sys.stdin.readline())
            assert list(request) == ["lr", "layers", "act"], request
            assert request["act"] == "tanh"
            print(json.dumps({"value": request["lr"] * request["layers"]}))
            """
        )
        objective = ExternalObjective(command, mixed_space, timeout=30)
        assert await objective.evaluate(Candidate((0.5, 3, "tanh"))) == 1.5

    @pytest.mark.asyncio
    async def test_nonzero_exit(self, stub_command):
        """Test a failing child is an objective error."""
        command = stub_command("import sys; sys.exit(3)")
        objective = ExternalObjective(command, SearchSpace.uniform_box(1, 0, 1), timeout=30)
        with pytest.raises(ObjectiveError, match="status 3"):
            await objective.evaluate(Candidate((0.5,)))

    @pytest.mark.asyncio
    async def test_timeout(self, stub_command):
        """Test a silent child is killed after the timeout."""
        command = stub_command("import time; time.sleep(30)")
        objective = ExternalObjective(command, SearchSpace.uniform_box(1, 0, 1), timeout=0.5)
        started = time.monotonic()
        with pytest.raises(ObjectiveTimeoutError):
            await objective.evaluate(Candidate((0.5,)))
        assert time.monotonic() - started < 10

    @pytest.mark.asyncio
    async def test_missing_executable(self):
        """Test a command that cannot start fails the evaluation."""
        objective = ExternalObjective(["/nonexistent/objective"], SearchSpace.uniform_box(1, 0, 1))
        with pytest.raises(ObjectiveError):
            await objective.evaluate(Candidate((0.5,)))

    @pytest.mark.asyncio
    async def test_failed_trials_consume_budget(self, stub_command, rng):
        """Test failing children become failed trials, not a crashed run."""
        command = stub_command("import sys; sys.exit(1)")
        space = SearchSpace.uniform_box(1, 0, 1)
        history = await random_search(space, ExternalObjective(command, space, timeout=30), 3, rng)
        assert len(history.trials) == 3
        assert all(t.failed for t in history.trials)

    @pytest.mark.asyncio
    async def test_worker_matches_builtin(self, g6_space, g6_objective, worker_command, rng):
        """Test one-shot subprocess values agree with in-process values."""
        objective = ExternalObjective(worker_command, g6_space, timeout=60)
        for _ in range(5):
            candidate = sample_candidate(g6_space, rng)
            expected = await g6_objective.evaluate(candidate)
            assert await objective.evaluate(candidate) == pytest.approx(expected, abs=1e-9)

    @pytest.mark.asyncio
    async def test_persistent_worker_end_to_end(self, g6_space, g6_objective, worker_command):
        """Test a persistent worker reproduces an in-process run."""
        async with ExternalObjective(worker_command, g6_space, timeout=60,
                                     persistent=True) as objective:
            external = await random_search(g6_space, objective, 40, substream(8, "RS", 0))
            pid = objective.process.pid
            await random_search(g6_space, objective, 2, substream(8, "RS", 1))
            assert objective.process.pid == pid
        internal = await random_search(g6_space, g6_objective, 40, substream(8, "RS", 0))
        for a, b in zip(external.trials, internal.trials):
            assert a.value == pytest.approx(b.value, abs=1e-9)
        assert objective.process is None

    @pytest.mark.asyncio
    async def test_persistent_restart_after_death(self, stub_command):
        """Test a child that exits after one answer is restarted."""
        command = stub_command(
            """
            import sys
            sys.stdin.readline()
            print('{"value": 2.0}', flush=True)
            """
        )
        space = SearchSpace.uniform_box(1, 0, 1)
        async with ExternalObjective(command, space, timeout=30, persistent=True) as objective:
            assert await objective.evaluate(Candidate((0.1,))) == 2.0
            await asyncio.wait_for(objective.process.wait(), 10)
            assert await objective.evaluate(Candidate((0.2,))) == 2.0

    @pytest.mark.asyncio
    async def test_persistent_error_response(self, stub_command):
        """Test an error line fails one evaluation and keeps the child."""
        command = stub_command(
            """
            import json, sys
            for line in sys.stdin:
                x = json.loads(line)["x1"]
                print(json.dumps({"error": "bad"} if x < 0.5 else {"value": x}), flush=True)
            """
        )
        space = SearchSpace.uniform_box(1, 0, 1)
        async with ExternalObjective(command, space, timeout=30, persistent=True) as objective:
            with pytest.raises(ObjectiveError, match="bad"):
                await objective.evaluate(Candidate((0.1,)))
            assert await objective.evaluate(Candidate((0.9,))) == 0.9

    @pytest.mark.asyncio
    async def test_max_parallel(self, stub_command):
        """Test concurrent evaluations are limited by max_parallel."""
        command = stub_command(
            """
            import sys, time
            sys.stdin.readline()
            time.sleep(0.3)
            print('{"value": 0.0}')
            """
        )
        space = SearchSpace.uniform_box(1, 0, 1)
        objective = ExternalObjective(command, space, timeout=30, max_parallel=1)
        started = time.monotonic()
        await asyncio.gather(*(objective.evaluate(Candidate((0.5,))) for _ in range(3)))
        assert time.monotonic() - started >= 0.9

    def test_invalid_construction(self):
        """Test bad commands and timeouts are configuration errors."""
        space = SearchSpace.uniform_box(1, 0, 1)
        with pytest.raises(ConfigError):
            ExternalObjective("python objective.py", space)
        with pytest.raises(ConfigError):
            ExternalObjective(["python"], space, timeout=0)
        with pytest.raises(ConfigError):
            ExternalObjective(["python"], space, max_parallel=0)


class TestObjectiveFromConfig:
    """Test cases for building objectives from config mappings."""

    def test_builtin(self, g6_space):
        """Test a built-in selector."""
        objective = objective_from_config({"builtin": "griewank_modified_6"}, g6_space)
        assert isinstance(objective, BuiltinObjective)
        assert objective.negate

    def test_arity_mismatch(self):
        """Test G6* needs six dimensions."""
        with pytest.raises(ConfigError, match="6 dimensions"):
            objective_from_config({"builtin": "griewank_modified_6"},
                                  SearchSpace.uniform_box(3, -1, 1))

    def test_command(self, g6_space):
        """Test an external command selector."""
        objective = objective_from_config(
            {"command": ["python", "obj.py"], "timeout": 5, "persistent": True}, g6_space
        )
        assert isinstance(objective, ExternalObjective)
        assert objective.persistent and objective.max_parallel == 1
        assert objective.timeout == 5.0

    def test_neither(self, g6_space):
        """Test a mapping without a selector."""
        with pytest.raises(ConfigError):
            objective_from_config({"negate": True}, g6_space)

    def test_unknown_key(self, g6_space):
        """Test misspelled objective keys."""
        with pytest.raises(ConfigError):
            objective_from_config({"builtin": "griewank", "negative": True}, g6_space)
