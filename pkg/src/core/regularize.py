"""
Regularization terms and the assembled objective

TV terms are means of smoothed gradient magnitudes of m at sampled spacetime
points; coil smoothness is the mean squared spatial gradient of the
normalized sensitivities. All sample sets are product grids, so every term
goes through the tensor evaluation path.
"""

from typing import Dict, List, Optional, Protocol, Sequence

from pydantic import BaseModel, ConfigDict

from . import autodiff as ad
from .autodiff import Tape, Variable
from .forward import KSpaceDataset, ReconstructionModel, data_consistency, normalized_coil_field
from .models import RegWeights
from .nfe import EvalGrid


class ObjectiveBatch(Protocol):
    coils: List[int]
    frames: List[int]

    def regularizer_grid(self) -> EvalGrid: ...

    def spatial_grid(self) -> EvalGrid: ...


class ObjectiveTerms(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    data: Variable
    tv_x: Optional[Variable] = None
    tv_t: Optional[Variable] = None
    coil: Optional[Variable] = None
    total: Variable

    def values(self) -> Dict[str, Optional[float]]:
        def scalar(v: Optional[Variable]) -> Optional[float]:
            return None if v is None else v.item()

        return {
            "data": scalar(self.data),
            "tv_x": scalar(self.tv_x),
            "tv_t": scalar(self.tv_t),
            "coil": scalar(self.coil),
            "total": scalar(self.total),
        }


def _squared_magnitude(partials: Sequence[Variable]) -> Variable:
    total = ad.cabs2(partials[0])
    for p in partials[1:]:
        total = ad.add(total, ad.cabs2(p))
    return total


def _tv_terms(
    model: ReconstructionModel, grid: EvalGrid, tape: Tape, spatial: bool, temporal: bool
) -> Dict[str, Variable]:
    n = model.geometry.spatial_dims
    axes = ([0] if temporal else []) + (list(range(1, n + 1)) if spatial else [])
    _, partials = model.magnetization.grid_with_partials(grid, axes, tape)
    terms: Dict[str, Variable] = {}
    if spatial:
        gradient = _squared_magnitude([partials[j] for j in range(1, n + 1)])
        terms["tv_x"] = ad.mean(ad.smooth_sqrt(gradient))
    if temporal:
        terms["tv_t"] = ad.mean(ad.smooth_sqrt(ad.cabs2(partials[0])))
    return terms


def tv_spatial(model: ReconstructionModel, grid: EvalGrid, tape: Tape) -> Variable:
    """Mean spatial gradient magnitude of m over a (time, space...) grid"""
    return _tv_terms(model, grid, tape, spatial=True, temporal=False)["tv_x"]


def tv_temporal(model: ReconstructionModel, grid: EvalGrid, tape: Tape) -> Variable:
    """Mean |dm/dt| over a (time, space...) grid"""
    return _tv_terms(model, grid, tape, spatial=False, temporal=True)["tv_t"]


def coil_smoothness(
    model: ReconstructionModel, coils: Sequence[int], grid: EvalGrid, tape: Tape
) -> Variable:
    """Mean over (point, coil) of sum_j |dS_c/dx_j|^2"""
    n = model.geometry.spatial_dims
    _, partials = normalized_coil_field(model.coils, grid, tape, axes=range(n))
    gradient = _squared_magnitude([partials[j] for j in range(n)])
    return ad.mean(ad.take(gradient, list(coils), axis=n))


def total_objective(
    model: ReconstructionModel,
    dataset: KSpaceDataset,
    batch: ObjectiveBatch,
    weights: RegWeights,
    epsilon: float,
    tape: Tape,
    evaluate_all: bool = False,
) -> ObjectiveTerms:
    """Data term plus weighted regularizers; zero-weight terms are skipped

    With `evaluate_all` every regularizer is computed and reported even when
    its weight is zero.
    """
    data = data_consistency(model, dataset, batch.coils, batch.frames, epsilon, tape)
    total = data

    want_x = evaluate_all or weights.lambda_tv_x > 0
    want_t = evaluate_all or weights.lambda_tv_t > 0
    want_coil = evaluate_all or weights.lambda_coil > 0

    tv: Dict[str, Variable] = {}
    if want_x or want_t:
        tv = _tv_terms(model, batch.regularizer_grid(), tape, spatial=want_x, temporal=want_t)
    coil = coil_smoothness(model, batch.coils, batch.spatial_grid(), tape) if want_coil else None

    for term, weight in (
        (tv.get("tv_x"), weights.lambda_tv_x),
        (tv.get("tv_t"), weights.lambda_tv_t),
        (coil, weights.lambda_coil),
    ):
        if term is not None and weight > 0:
            total = ad.add(total, ad.scale(term, weight))

    return ObjectiveTerms(
        data=data, tv_x=tv.get("tv_x"), tv_t=tv.get("tv_t"), coil=coil, total=total
    )
