"""
Reconstruction loop

One iteration draws a batch, records the objective on a fresh tape, takes an
Adam step and feeds the data term to the plateau scheduler. An optional
warm-up first picks the regularizer weights.
"""

import math
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..core.autodiff import Tape
from ..core.errors import NumericalError
from ..core.forward import KSpaceDataset, ReconstructionModel, resolve_epsilon
from ..core.models import LossRecord, RegWeights, RunConfig
from ..core.regularize import total_objective
from ..tools.container import write_checkpoint
from ..utils.logger import get_contextual_logger, log_execution_time
from ..utils.observer import RunObserver
from .optimizer import (
    AdamState,
    SchedulerState,
    WarmupSchedule,
    adam_step,
    run_warmup_ladder,
    schedule_lr,
)
from .sampler import draw_batch, make_rng

log = get_contextual_logger("reconstruct")

PathLike = Union[str, Path]


class ReconstructionResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: ReconstructionModel
    trace: List[LossRecord]
    weights: RegWeights
    warmup: Optional[WarmupSchedule] = None


class ReconstructionRun:
    """Optimizer state and bookkeeping for one model fitted to one dataset"""

    def __init__(
        self,
        model: ReconstructionModel,
        dataset: KSpaceDataset,
        config: RunConfig,
        rng: Optional[np.random.Generator] = None,
        observer: Optional[RunObserver] = None,
        checkpoint_dir: Optional[PathLike] = None,
        diagnostics_dir: Optional[PathLike] = None,
    ) -> None:
        config.validate_against(dataset.geometry)
        self.model = model
        self.dataset = dataset
        self.config = config
        self.rng = rng if rng is not None else make_rng(config.seed)
        self.observer = observer or RunObserver()
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        self.diagnostics_dir = Path(diagnostics_dir) if diagnostics_dir else None

        self.epsilon = resolve_epsilon(config, dataset)
        self.adam = AdamState.from_config(config)
        self.scheduler = SchedulerState(config=config.scheduler)
        self.params = model.parameters()
        self.iteration = 0
        self._segment_ema: Optional[float] = None
        log.info(
            f"Run set up: {sum(p.size for p in self.params.values())} parameters, "
            f"epsilon {self.epsilon:.3e}, lr {self.adam.lr:.2e}"
        )

    def step(self, weights: RegWeights, update_scheduler: bool = True) -> LossRecord:
        batch = draw_batch(self.config.batch, self.dataset.geometry, self.rng)
        tape = Tape()
        terms = total_objective(
            self.model,
            self.dataset,
            batch,
            weights,
            self.epsilon,
            tape,
            evaluate_all=self.config.evaluate_all_terms,
        )
        values = terms.values()
        total = values["total"]
        if total is None or not math.isfinite(total):
            self._abort(f"Non-finite objective {total} at iteration {self.iteration + 1}", values)

        grads = tape.backward(terms.total)
        applied = adam_step(self.adam, self.params, grads)
        self.iteration += 1
        if applied and update_scheduler:
            schedule_lr(self.scheduler, self.adam, float(values["data"]))

        record = LossRecord(
            iteration=self.iteration,
            data=float(values["data"]),
            tv_x=values["tv_x"],
            tv_t=values["tv_t"],
            coil=values["coil"],
            total=float(total),
            lr=self.adam.lr,
            skipped=not applied,
        )
        self.observer.record(record)
        return record

    def _abort(self, message: str, values: dict) -> None:
        if self.diagnostics_dir is not None:
            self.observer.dump_diagnostics(
                self.diagnostics_dir,
                {
                    "error": message,
                    "iteration": self.iteration + 1,
                    "terms": values,
                    "lr": self.adam.lr,
                    "config_hash": self.config.config_hash(),
                },
            )
        raise NumericalError(message)

    def run_segment(self, weights: RegWeights, iterations: int) -> Tuple[float, float]:
        """Run a warm-up segment; returns the data-loss EMA before and after it"""
        decay = self.config.warmup.ema_decay
        start = self._segment_ema
        for _ in range(iterations):
            data = self.step(weights, update_scheduler=False).data
            if self._segment_ema is None:
                self._segment_ema = data
            else:
                self._segment_ema = decay * self._segment_ema + (1.0 - decay) * data
            if start is None:
                start = data
        assert start is not None and self._segment_ema is not None
        return start, self._segment_ema

    def warmup(self) -> WarmupSchedule:
        schedule = run_warmup_ladder(self.run_segment, self.config.warmup)
        log.info(
            f"Warm-up used {schedule.iterations} iterations; weights "
            f"{schedule.weights.model_dump()}"
        )
        return schedule

    def save_checkpoint(self) -> None:
        if self.checkpoint_dir is None:
            return
        write_checkpoint(
            self.checkpoint_dir,
            self.model,
            self.config,
            iteration=self.iteration,
            lr=self.adam.lr,
        )

    def run(self) -> ReconstructionResult:
        weights = self.config.regularization
        schedule: Optional[WarmupSchedule] = None
        if self.config.warmup.enabled:
            schedule = self.warmup()
            weights = schedule.weights

        interval = self.config.checkpoint_interval()
        for i in range(self.config.iterations):
            self.step(weights)
            if (i + 1) % interval == 0:
                self.save_checkpoint()
        if self.config.iterations % interval != 0 or self.config.iterations == 0:
            self.save_checkpoint()

        summary = self.observer.summary()
        log.info(f"Reconstruction finished: {summary}")
        return ReconstructionResult(
            model=self.model, trace=list(self.observer.records), weights=weights, warmup=schedule
        )


def warmup(
    model: ReconstructionModel,
    dataset: KSpaceDataset,
    config: RunConfig,
    rng: Optional[np.random.Generator] = None,
) -> RegWeights:
    """Choose regularizer weights by the staged ladder, training `model` along the way"""
    return ReconstructionRun(model, dataset, config, rng=rng).warmup().weights


@log_execution_time("reconstruct")
def reconstruct(
    dataset: KSpaceDataset,
    config: RunConfig,
    checkpoint_dir: Optional[PathLike] = None,
    observer: Optional[RunObserver] = None,
    diagnostics_dir: Optional[PathLike] = None,
) -> ReconstructionResult:
    rng = make_rng(config.seed)
    model = ReconstructionModel.initialize(config, dataset.geometry, rng)
    run = ReconstructionRun(
        model,
        dataset,
        config,
        rng=rng,
        observer=observer,
        checkpoint_dir=checkpoint_dir,
        diagnostics_dir=diagnostics_dir,
    )
    return run.run()
