"""
Neural field expansions

A field over a rectangle is sum_k c_k prod_j phi_j(y_j)[k_j] with one sine
network per axis. On a product grid each network is evaluated once per axis
node and the results are contracted into the coefficient tensor mode by mode.
Scattered points fall back to the literal per-point sum.
"""

import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from . import autodiff as ad
from .autodiff import Tape, Variable, to_complex
from .errors import DimensionError, InvalidInputError
from .models import FieldConfig
from .siren import SirenMLP, init_siren
from .tensor import DenseTensor, contraction_order, tucker_apply


class EvalGrid(BaseModel):
    """Per-axis coordinate lists of a product grid"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    axes: List[np.ndarray]

    @field_validator("axes", mode="before")
    @classmethod
    def _as_vectors(cls, axes: Sequence) -> List[np.ndarray]:
        vectors = [np.asarray(a, dtype=np.float64).reshape(-1) for a in axes]
        if not vectors:
            raise ValueError("a grid needs at least one axis")
        for j, v in enumerate(vectors):
            if v.size == 0:
                raise ValueError(f"grid axis {j} is empty")
        return vectors

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def ndim(self) -> int:
        return len(self.axes)


class NeuralFieldExpansion:
    """Tensor-product field with an optional trailing channel mode"""

    def __init__(
        self,
        name: str,
        networks: Sequence[SirenMLP],
        coeffs: np.ndarray,
        channels: Optional[int] = None,
    ) -> None:
        coeffs = np.asarray(coeffs, dtype=np.float64)
        d = len(networks)
        expected_rank = d + (1 if channels is not None else 0) + 1
        if d < 1 or coeffs.ndim != expected_rank or coeffs.shape[-1] != 2:
            raise DimensionError(
                f"{name}: coefficient array {coeffs.shape} does not fit {d} networks"
                + (f" and {channels} channels" if channels is not None else "")
            )
        for j, net in enumerate(networks):
            if net.n_out != coeffs.shape[j]:
                raise DimensionError(
                    f"{name}: network {j} has {net.n_out} modes, coefficients expect "
                    f"{coeffs.shape[j]}"
                )
        if channels is not None and coeffs.shape[d] != channels:
            raise DimensionError(f"{name}: channel axis has {coeffs.shape[d]}, expected {channels}")

        self.name = name
        self.networks = list(networks)
        self.coeffs = coeffs
        self.channels = channels
        self.eval_counter = 0

    @property
    def dim(self) -> int:
        return len(self.networks)

    @property
    def modes(self) -> Tuple[int, ...]:
        return tuple(net.n_out for net in self.networks)

    @property
    def domain(self) -> List[Tuple[float, float]]:
        return [net.domain for net in self.networks]

    def parameters(self) -> Dict[str, np.ndarray]:
        params: Dict[str, np.ndarray] = {}
        for net in self.networks:
            params.update(net.parameters())
        params[f"{self.name}.coeffs"] = self.coeffs
        return params

    def load_parameters(self, params: Dict[str, np.ndarray]) -> None:
        for net in self.networks:
            net.load_parameters(params)
        key = f"{self.name}.coeffs"
        if key not in params or np.shape(params[key]) != self.coeffs.shape:
            raise InvalidInputError(f"Missing or misshapen parameter {key}")
        self.coeffs[...] = params[key]

    def _check_grid(self, grid: EvalGrid) -> None:
        if grid.ndim != self.dim:
            raise DimensionError(f"{self.name}: grid has {grid.ndim} axes, field has {self.dim}")

    def _contract(self, tape: Tape, factors: Sequence[Variable]) -> Variable:
        result = tape.param(f"{self.name}.coeffs", self.coeffs)
        rows = [f.shape[0] for f in factors]
        for j in contraction_order(self.modes, rows):
            result = ad.cmode_contract(result, j, factors[j])
        return result

    def grid_with_partials(
        self, grid: EvalGrid, axes: Sequence[int], tape: Tape
    ) -> Tuple[Variable, Dict[int, Variable]]:
        """Field values and the partials along `axes`, one network pass per axis"""
        self._check_grid(grid)
        wanted = set(axes)
        for j in wanted:
            if j < 0 or j >= self.dim:
                raise DimensionError(f"{self.name}: axis {j} out of range for dimension {self.dim}")

        values: List[Variable] = []
        derivatives: Dict[int, Variable] = {}
        for j, (net, points) in enumerate(zip(self.networks, grid.axes)):
            if j in wanted:
                v, dv = net.forward_with_derivative(points, tape)
                derivatives[j] = dv
            else:
                v = net.forward(points, tape)
            values.append(v)
            self.eval_counter += points.size

        field = self._contract(tape, values)
        partials = {}
        for j in sorted(wanted):
            factors = list(values)
            factors[j] = derivatives[j]
            partials[j] = self._contract(tape, factors)
        return field, partials

    def eval_grid(self, grid: EvalGrid, tape: Tape) -> Variable:
        """Field on the product grid, shape (*P, [channels], 2)"""
        field, _ = self.grid_with_partials(grid, (), tape)
        return field

    def partial_grid(self, axis: int, grid: EvalGrid, tape: Tape) -> Variable:
        self._check_grid(grid)
        if axis < 0 or axis >= self.dim:
            raise DimensionError(f"{self.name}: axis {axis} out of range for dimension {self.dim}")
        factors = []
        for j, (net, points) in enumerate(zip(self.networks, grid.axes)):
            if j == axis:
                _, factor = net.forward_with_derivative(points, tape)
            else:
                factor = net.forward(points, tape)
            factors.append(factor)
            self.eval_counter += points.size
        return self._contract(tape, factors)

    def eval_points(self, points: np.ndarray, tape: Tape) -> Variable:
        """Per-point sum over all modes, shape (n, [channels], 2)"""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if self.dim == 1 else pts.reshape(1, -1)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise DimensionError(f"{self.name}: points need shape (n, {self.dim}), got {pts.shape}")
        n = pts.shape[0]
        factors = [net.forward(pts[:, j], tape) for j, net in enumerate(self.networks)]
        self.eval_counter += n * self.dim

        trailing = 1 if self.channels is not None else 0
        result = ad.cmode_contract(tape.param(f"{self.name}.coeffs", self.coeffs), 0, factors[0])
        for j in range(1, self.dim):
            remaining = self.dim - j - 1 + trailing
            factor = ad.reshape(factors[j], (n, self.modes[j]) + (1,) * remaining + (2,))
            result = ad.sum(ad.cmul(result, factor), axis=1)
        return result

    def render(self, grid: EvalGrid) -> np.ndarray:
        """Complex field values on a grid, outside any optimization"""
        return to_complex(self.eval_grid(grid, Tape()).value)

    def integrate(
        self, bounds: Sequence[Tuple[float, float]], order: int
    ) -> "complex | np.ndarray":
        """Integral over a sub-rectangle with per-axis Gauss-Legendre rules"""
        if len(bounds) != self.dim:
            raise DimensionError(f"{self.name}: need {self.dim} intervals, got {len(bounds)}")

        def factor_fn(net: SirenMLP) -> Callable[[np.ndarray], np.ndarray]:
            return lambda xs: to_complex(net.forward(xs, Tape()).value)

        for net, (a, b) in zip(self.networks, bounds):
            net.rescale(np.array([a, b]))
        self.eval_counter += order * self.dim
        return integrate_tensor_product(
            to_complex(self.coeffs),
            [factor_fn(net) for net in self.networks],
            bounds,
            order,
        )


def integrate_tensor_product(
    coeffs: np.ndarray,
    factor_fns: Sequence[Callable[[np.ndarray], np.ndarray]],
    bounds: Sequence[Tuple[float, float]],
    order: int,
) -> "complex | np.ndarray":
    """Integrate sum_k c_k prod_j f_j(y_j)[k_j] axis by axis

    Each f_j maps an array of n nodes to an (n, N_j) array. A q-point rule per
    axis is exact when every factor is a polynomial of degree at most 2q - 1.
    Channel axes beyond the factors are returned unintegrated.
    """
    if order < 1:
        raise InvalidInputError(f"Quadrature order must be at least 1, got {order}")
    nodes, weights = np.polynomial.legendre.leggauss(order)
    rows = []
    for fn, (a, b) in zip(factor_fns, bounds):
        if not (math.isfinite(a) and math.isfinite(b)) or b <= a:
            raise InvalidInputError(f"Degenerate integration interval [{a}, {b}]")
        half = (b - a) / 2.0
        xs = a + (nodes + 1.0) * half
        values = np.asarray(fn(xs), dtype=np.complex128)
        rows.append((half * weights) @ values)

    coeff_tensor = np.asarray(coeffs, dtype=np.complex128)
    d = len(rows)
    if d > coeff_tensor.ndim:
        raise DimensionError(f"{d} factors for a coefficient tensor of rank {coeff_tensor.ndim}")
    if d == coeff_tensor.ndim:
        result = tucker_apply(DenseTensor(coeff_tensor), [r.reshape(1, -1) for r in rows])
        return complex(result.data.reshape(-1)[0])
    result_array = coeff_tensor
    for row in rows:
        result_array = np.tensordot(row, result_array, axes=([0], [0]))
    return result_array


def as_tensor(var: Variable) -> DenseTensor:
    return DenseTensor.from_pairs(var.value)


def init_nfe(
    rng: np.random.Generator,
    config: FieldConfig,
    domain: Sequence[Tuple[float, float]],
    name: str,
    channels: Optional[int] = None,
) -> NeuralFieldExpansion:
    if len(config.modes) != len(domain):
        raise DimensionError(f"{name}: {len(config.modes)} mode counts for a {len(domain)}-d domain")
    networks = [
        init_siren(
            rng,
            config.hidden_layers,
            config.width,
            n_modes,
            config.embedding,
            interval,
            f"{name}.phi{j}",
        )
        for j, (n_modes, interval) in enumerate(zip(config.modes, domain))
    ]
    bound = 1.0 / math.sqrt(math.prod(config.modes))
    shape = tuple(config.modes) + ((channels,) if channels is not None else ()) + (2,)
    coeffs = rng.uniform(-bound, bound, size=shape)
    return NeuralFieldExpansion(name, networks, coeffs, channels)
