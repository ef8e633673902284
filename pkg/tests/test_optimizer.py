from typing import Callable, List, Tuple

import numpy as np
import pytest

from src.core.errors import InvalidInputError
from src.core.models import RegWeights, SchedulerConfig, WarmupConfig
from src.optim.optimizer import (
    AdamState,
    SchedulerState,
    adam_step,
    run_warmup_ladder,
    schedule_lr,
)


class TestAdam:
    def test_first_step_moves_by_learning_rate(self) -> None:
        params = {"theta": np.zeros(3)}
        state = AdamState(lr=0.01)
        assert adam_step(state, params, {"theta": np.full(3, 0.5)})
        np.testing.assert_allclose(params["theta"], -0.01, rtol=1e-6)
        assert state.step == 1

    def test_decoupled_weight_decay(self) -> None:
        params = {"theta": np.ones(2)}
        state = AdamState(lr=0.1, weight_decay=0.1)
        adam_step(state, params, {"theta": np.zeros(2)})
        np.testing.assert_allclose(params["theta"], 0.99)

    def test_moments_accumulate(self) -> None:
        params = {"theta": np.zeros(1)}
        state = AdamState(lr=0.01)
        for _ in range(3):
            adam_step(state, params, {"theta": np.ones(1)})
        # constant gradients keep the bias-corrected step at lr
        np.testing.assert_allclose(params["theta"], -0.03, rtol=1e-6)
        np.testing.assert_allclose(state.first["theta"], 1.0 - 0.9**3)

    def test_non_finite_gradient_skips_step(
        self, log_capture: pytest.LogCaptureFixture
    ) -> None:
        params = {"theta": np.ones(2)}
        state = AdamState(lr=0.01)
        assert not adam_step(state, params, {"theta": np.array([1.0, np.inf])})
        np.testing.assert_array_equal(params["theta"], 1.0)
        assert state.step == 0
        assert "skipped" in log_capture.text

    def test_rejects_unknown_or_misshapen_gradients(self) -> None:
        state = AdamState(lr=0.01)
        with pytest.raises(InvalidInputError):
            adam_step(state, {"a": np.zeros(2)}, {"b": np.zeros(2)})
        with pytest.raises(InvalidInputError):
            adam_step(state, {"a": np.zeros(2)}, {"a": np.zeros(3)})


class TestScheduler:
    def test_improving_loss_keeps_learning_rate(self) -> None:
        adam = AdamState(lr=1e-3)
        sched = SchedulerState(config=SchedulerConfig(patience=5))
        for k in range(60):
            schedule_lr(sched, adam, 0.5**k)
        assert adam.lr == 1e-3
        assert sched.reductions == 0

    def test_plateau_halves_learning_rate(self) -> None:
        adam = AdamState(lr=1e-3)
        sched = SchedulerState(config=SchedulerConfig(patience=3))
        for _ in range(4):
            schedule_lr(sched, adam, 1.0)
        assert adam.lr == pytest.approx(5e-4)
        assert sched.reductions == 1
        assert sched.bad_steps == 0
        for _ in range(3):
            schedule_lr(sched, adam, 1.0)
        assert adam.lr == pytest.approx(2.5e-4)

    def test_learning_rate_floor(self) -> None:
        adam = AdamState(lr=1e-8)
        sched = SchedulerState(config=SchedulerConfig(patience=1, min_lr=1e-8))
        for _ in range(5):
            schedule_lr(sched, adam, 1.0)
        assert adam.lr == 1e-8
        assert sched.reductions == 0

    def test_rejects_non_finite_loss(self) -> None:
        with pytest.raises(InvalidInputError):
            schedule_lr(SchedulerState(), AdamState(lr=1e-3), float("nan"))


class _Runner:
    """Scripted segment runner that records the weights it was given"""

    def __init__(self, stalls: Callable[[RegWeights], bool]) -> None:
        self.stalls = stalls
        self.calls: List[Tuple[RegWeights, int]] = []

    def __call__(self, weights: RegWeights, iterations: int) -> Tuple[float, float]:
        self.calls.append((weights, iterations))
        return (1.0, 2.0) if self.stalls(weights) else (1.0, 0.9)


class TestWarmupLadder:
    def test_unregularized_problem_climbs_every_rung(self) -> None:
        runner = _Runner(lambda w: False)
        schedule = run_warmup_ladder(runner, WarmupConfig(enabled=True))
        top = 1e-5 * 2**11 * 0.5
        assert schedule.weights.lambda_tv_t == pytest.approx(top)
        assert schedule.weights.lambda_tv_x == pytest.approx(top)
        assert schedule.weights.lambda_coil == pytest.approx(top)
        assert [len(s.rungs) for s in schedule.stages] == [12, 12, 12]
        assert schedule.iterations == 360
        assert all(iterations == 10 for _, iterations in runner.calls)

    def test_stages_run_in_order_with_earlier_choices_kept(self) -> None:
        runner = _Runner(lambda w: w.lambda_tv_t > 1e-4)
        schedule = run_warmup_ladder(runner, WarmupConfig(enabled=True))
        assert [s.stage for s in schedule.stages] == ["tv_t", "tv_x", "coil"]
        # 1e-5, 2e-5, 4e-5, 8e-5 pass; 1.6e-4 stalls
        assert schedule.stages[0].stalled
        assert schedule.stages[0].rungs[-1] == pytest.approx(1.6e-4)
        assert schedule.weights.lambda_tv_t == pytest.approx(4e-5)
        tv_x_calls = [w for w, _ in runner.calls if w.lambda_tv_x > 0 and w.lambda_coil == 0]
        assert all(w.lambda_tv_t == pytest.approx(4e-5) for w in tv_x_calls)
        assert runner.calls[0][0].lambda_tv_x == 0.0

    def test_all_rungs_stalling_falls_back_to_minimum(
        self, log_capture: pytest.LogCaptureFixture
    ) -> None:
        schedule = run_warmup_ladder(_Runner(lambda w: True), WarmupConfig(enabled=True))
        assert all(s.stalled and s.selected == 1e-5 for s in schedule.stages)
        assert [len(s.rungs) for s in schedule.stages] == [1, 1, 1]
        assert "every rung stalled" in log_capture.text

    def test_budget_runs_out(self) -> None:
        config = WarmupConfig(enabled=True, iterations=25, segment_iterations=10)
        schedule = run_warmup_ladder(_Runner(lambda w: False), config)
        first, second, third = schedule.stages
        assert first.exhausted and first.rungs == pytest.approx([1e-5, 2e-5])
        assert first.selected == pytest.approx(1e-5)
        assert second.exhausted and not second.rungs and second.selected == 1e-5
        assert third.exhausted and third.selected == 1e-5
        assert schedule.iterations == 20

    def test_empty_budget_assigns_the_minimum(self) -> None:
        config = WarmupConfig(enabled=True, iterations=0)
        base = RegWeights(lambda_tv_x=0.3)
        schedule = run_warmup_ladder(_Runner(lambda w: False), config, base)
        assert schedule.weights.lambda_tv_x == 1e-5
        assert schedule.iterations == 0
