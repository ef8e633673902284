"""
Univariate sine networks

A SirenMLP maps one coordinate in [a, b] to N_out complex modes. Inputs are
rescaled to [-1, 1]; L sine layers (1 -> K, then K -> K) are followed by a
linear K -> 2 N_out layer whose output pairs are read as (re, im).
"""

import math
from typing import Dict, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Variable
from .errors import DomainError, InvalidInputError
from .models import FrequencyEmbedding

DOMAIN_TOLERANCE = 1e-12


class SirenMLP:
    """Sine network with its parameters held as float64 arrays"""

    def __init__(
        self,
        name: str,
        weights: Dict[int, np.ndarray],
        biases: Dict[int, np.ndarray],
        embedding: FrequencyEmbedding,
        domain: Tuple[float, float],
    ) -> None:
        a, b = float(domain[0]), float(domain[1])
        if not b > a:
            raise InvalidInputError(f"Network domain must satisfy a < b, got {domain}")
        if len(weights) < 2 or len(weights) != len(biases):
            raise InvalidInputError("A sine network needs at least one sine layer and an output layer")
        self.name = name
        self.embedding = embedding
        self.domain = (a, b)
        self.weights = {i: np.asarray(weights[i], dtype=np.float64) for i in sorted(weights)}
        self.biases = {i: np.asarray(biases[i], dtype=np.float64) for i in sorted(biases)}
        self._check_shapes()

    def _check_shapes(self) -> None:
        fan_in = 1
        for i in range(len(self.weights)):
            w, bias = self.weights[i], self.biases[i]
            if w.ndim != 2 or w.shape[0] != fan_in or bias.shape != (w.shape[1],):
                raise InvalidInputError(
                    f"{self.name}: layer {i} has weight {w.shape} and bias {bias.shape}"
                )
            fan_in = w.shape[1]
        if fan_in % 2:
            raise InvalidInputError(f"{self.name}: output width {fan_in} is not a pair count")

    @property
    def hidden_layers(self) -> int:
        return len(self.weights) - 1

    @property
    def width(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_out(self) -> int:
        return self.weights[self.hidden_layers].shape[1] // 2

    @property
    def derivative_scale(self) -> float:
        a, b = self.domain
        return 2.0 / (b - a)

    def parameters(self) -> Dict[str, np.ndarray]:
        params: Dict[str, np.ndarray] = {}
        for i in range(len(self.weights)):
            params[f"{self.name}.w{i}"] = self.weights[i]
            params[f"{self.name}.b{i}"] = self.biases[i]
        return params

    def rescale(self, xs: np.ndarray) -> np.ndarray:
        """Map physical coordinates in [a, b] onto [-1, 1]"""
        xs = np.asarray(xs, dtype=np.float64).reshape(-1)
        a, b = self.domain
        tol = DOMAIN_TOLERANCE * (b - a)
        if xs.size == 0:
            raise InvalidInputError(f"{self.name}: no input points")
        if not np.all(np.isfinite(xs)) or xs.min() < a - tol or xs.max() > b + tol:
            raise DomainError(
                f"{self.name}: inputs must lie in [{a}, {b}], "
                f"got range [{xs.min()}, {xs.max()}]"
            )
        return np.clip(2.0 * (xs - a) / (b - a) - 1.0, -1.0, 1.0)

    def unscale(self, us: np.ndarray) -> np.ndarray:
        a, b = self.domain
        return a + (np.asarray(us, dtype=np.float64) + 1.0) * (b - a) / 2.0

    def _bind(self, tape: Tape) -> Tuple[Dict[int, Variable], Dict[int, Variable]]:
        ws = {i: tape.param(f"{self.name}.w{i}", w) for i, w in self.weights.items()}
        bs = {i: tape.param(f"{self.name}.b{i}", b) for i, b in self.biases.items()}
        return ws, bs

    def _omega(self, layer: int) -> float:
        return self.embedding.omega_first if layer == 0 else self.embedding.omega_hidden

    def forward(self, xs: np.ndarray, tape: Tape) -> Variable:
        """Mode values at `xs`, shape (n, N_out, 2)"""
        values, _ = self._run(xs, tape, with_derivative=False)
        return values

    def forward_with_derivative(self, xs: np.ndarray, tape: Tape) -> Tuple[Variable, Variable]:
        """Mode values and their derivative in the physical coordinate"""
        values, derivative = self._run(xs, tape, with_derivative=True)
        assert derivative is not None
        return values, derivative

    def _run(
        self, xs: np.ndarray, tape: Tape, with_derivative: bool
    ) -> Tuple[Variable, Optional[Variable]]:
        us = self.rescale(xs)
        n = us.size
        ws, bs = self._bind(tape)

        h: Variable = tape.constant(us.reshape(n, 1))
        dh: Optional[Variable] = None
        for i in range(self.hidden_layers):
            omega = self._omega(i)
            z = ad.scale(ad.add(ad.matmul(h, ws[i]), bs[i]), omega)
            if with_derivative:
                # d/du of the pre-activation; the first layer's input derivative is 1
                dz = ad.scale(ws[i] if dh is None else ad.matmul(dh, ws[i]), omega)
                dh = ad.mul(ad.cos(z), dz)
            h = ad.sin(z)

        last = self.hidden_layers
        out = ad.reshape(ad.add(ad.matmul(h, ws[last]), bs[last]), (n, self.n_out, 2))
        if not with_derivative:
            return out, None
        assert dh is not None
        d_out = ad.scale(ad.matmul(dh, ws[last]), self.derivative_scale)
        return out, ad.reshape(d_out, (n, self.n_out, 2))

    def load_parameters(self, params: Dict[str, np.ndarray]) -> None:
        """Overwrite parameters in place from a name -> array table"""
        for key, target in self.parameters().items():
            if key not in params:
                raise InvalidInputError(f"Missing parameter {key}")
            source = np.asarray(params[key], dtype=np.float64)
            if source.shape != target.shape:
                raise InvalidInputError(
                    f"Parameter {key} has shape {source.shape}, expected {target.shape}"
                )
            target[...] = source


def init_siren(
    rng: np.random.Generator,
    hidden_layers: int,
    width: int,
    n_out: int,
    embedding: FrequencyEmbedding,
    domain: Tuple[float, float],
    name: str,
) -> SirenMLP:
    """Draw a sine network with the sine-network uniform initialization"""
    if hidden_layers < 1 or width < 1 or n_out < 1:
        raise InvalidInputError(
            f"Sizes must be positive: L={hidden_layers}, K={width}, N_out={n_out}"
        )
    weights: Dict[int, np.ndarray] = {}
    biases: Dict[int, np.ndarray] = {}
    fan_in = 1
    for i in range(hidden_layers + 1):
        fan_out = 2 * n_out if i == hidden_layers else width
        deep_bound = math.sqrt(6.0 / fan_in) / embedding.omega_hidden
        w_bound = 1.0 / fan_in if i == 0 else deep_bound
        weights[i] = rng.uniform(-w_bound, w_bound, size=(fan_in, fan_out))
        biases[i] = rng.uniform(-deep_bound, deep_bound, size=fan_out)
        fan_in = fan_out
    return SirenMLP(name, weights, biases, embedding, domain)
