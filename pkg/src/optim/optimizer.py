"""
Adam, plateau learning-rate scheduling and the regularizer warm-up ladder
"""

from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.errors import InvalidInputError
from ..core.models import RegWeights, RunConfig, SchedulerConfig, WarmupConfig
from ..utils.logger import get_contextual_logger

log = get_contextual_logger("optimizer")
warmup_log = log.child("warmup")


class AdamState(BaseModel):
    """Moment estimates per named parameter; decoupled weight decay when nonzero"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    lr: float = Field(gt=0)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    first: Dict[str, np.ndarray] = Field(default_factory=dict)
    second: Dict[str, np.ndarray] = Field(default_factory=dict)

    @classmethod
    def from_config(cls, config: RunConfig) -> "AdamState":
        return cls(
            lr=config.learning_rate,
            betas=config.betas,
            eps=config.adam_eps,
            weight_decay=config.weight_decay,
        )


def adam_step(
    state: AdamState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]
) -> bool:
    """Update `params` in place; returns False and skips the step on non-finite gradients"""
    for name, g in grads.items():
        if name not in params:
            raise InvalidInputError(f"Gradient for unknown parameter {name}")
        if g.shape != params[name].shape:
            raise InvalidInputError(
                f"Gradient {name} has shape {g.shape}, parameter has {params[name].shape}"
            )
    bad = [name for name, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        log.warning(f"Non-finite gradients in {bad[:3]}; step {state.step + 1} skipped")
        return False

    beta1, beta2 = state.betas
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for name, g in grads.items():
        theta = params[name]
        m = state.first.get(name)
        v = state.second.get(name)
        if m is None or v is None:
            m = np.zeros_like(theta)
            v = np.zeros_like(theta)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.first[name], state.second[name] = m, v

        if state.weight_decay:
            theta -= state.lr * state.weight_decay * theta
        theta -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return True


class SchedulerState(BaseModel):
    config: SchedulerConfig = Field(default_factory=SchedulerConfig)
    ema: Optional[float] = None
    best: Optional[float] = None
    bad_steps: int = 0
    reductions: int = 0


def schedule_lr(sched: SchedulerState, adam: AdamState, data_loss: float) -> float:
    """Reduce the learning rate when the data-loss EMA stops improving"""
    cfg = sched.config
    if not np.isfinite(data_loss):
        raise InvalidInputError(f"Scheduler received a non-finite loss {data_loss}")
    sched.ema = (
        data_loss
        if sched.ema is None
        else cfg.ema_decay * sched.ema + (1.0 - cfg.ema_decay) * data_loss
    )
    if sched.best is None:
        sched.best = sched.ema
        return adam.lr

    if sched.ema < sched.best * (1.0 - cfg.threshold):
        sched.best = sched.ema
        sched.bad_steps = 0
        return adam.lr

    sched.bad_steps += 1
    if sched.bad_steps >= cfg.patience:
        sched.bad_steps = 0
        reduced = max(adam.lr * cfg.factor, cfg.min_lr)
        if reduced < adam.lr:
            log.info(f"Data loss plateaued; learning rate {adam.lr:.3e} -> {reduced:.3e}")
            adam.lr = reduced
            sched.reductions += 1
    return adam.lr


class StageOutcome(BaseModel):
    stage: str
    rungs: List[float] = Field(default_factory=list)
    stalled: bool = False
    exhausted: bool = False
    selected: float
    iterations: int = 0


class WarmupSchedule(BaseModel):
    """Record of one warm-up: the ladder tried per stage and the weights chosen"""

    stages: List[StageOutcome] = Field(default_factory=list)
    iterations: int = 0
    weights: RegWeights = Field(default_factory=RegWeights)


# runner(weights, iterations) -> (data-loss EMA before the segment, after it)
SegmentRunner = Callable[[RegWeights, int], Tuple[float, float]]


def run_warmup_ladder(
    runner: SegmentRunner, config: WarmupConfig, base: Optional[RegWeights] = None
) -> WarmupSchedule:
    """Enable one regularizer at a time and climb its weight until the data loss stalls

    Each rung runs a short segment with the candidate weight. A rung stalls when
    the data-loss EMA ends more than `stall_tolerance` above its value at the
    segment start. The stage keeps `selection_factor` times the last rung that
    did not stall. Stages that the iteration budget no longer covers get
    `lambda_min`.
    """
    weights = base or RegWeights()
    schedule = WarmupSchedule(weights=weights)
    remaining = config.iterations

    for stage in config.stages:
        if remaining < config.segment_iterations:
            schedule.stages.append(
                StageOutcome(stage=stage, exhausted=True, selected=config.lambda_min)
            )
            weights = weights.with_stage(stage, config.lambda_min)
            continue

        outcome = StageOutcome(stage=stage, selected=config.lambda_min)
        last_ok: Optional[float] = None
        for k in range(config.max_rungs):
            if remaining < config.segment_iterations:
                outcome.exhausted = True
                break
            candidate = config.lambda_min * config.ladder_factor**k
            start, end = runner(weights.with_stage(stage, candidate), config.segment_iterations)
            remaining -= config.segment_iterations
            outcome.iterations += config.segment_iterations
            outcome.rungs.append(candidate)
            if end > start * (1.0 + config.stall_tolerance):
                outcome.stalled = True
                break
            last_ok = candidate

        if last_ok is None:
            if outcome.stalled:
                warmup_log.warning("stage %s: every rung stalled; using %.1e", stage, config.lambda_min)
            outcome.selected = config.lambda_min
        else:
            outcome.selected = last_ok * config.selection_factor
        warmup_log.info(
            f"stage {stage}: {len(outcome.rungs)} rungs, "
            f"selected {outcome.selected:.3e}" + (" (budget exhausted)" if outcome.exhausted else "")
        )
        weights = weights.with_stage(stage, outcome.selected)
        schedule.stages.append(outcome)

    schedule.iterations = config.iterations - remaining
    schedule.weights = weights
    return schedule
