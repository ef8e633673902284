"""
Reverse-mode automatic differentiation

A Tape records primitive operations on float64 numpy arrays in execution
order, so the backward pass is a single reverse sweep. Complex quantities are
carried as real arrays whose last axis holds (re, im); the complex-pair
primitives below convert internally and return real pairs. For those
primitives the adjoint of a complex output is handled as g = dL/dRe + i dL/dIm,
which makes holomorphic backward rules read conj(f'(z)) * g.
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DimensionError, UsageError
from .fourier import centered_dft, centered_idft
from .tensor import contract_array

SMOOTH_DELTA = 1e-8

ArrayLike = Union[np.ndarray, float, int]
Operand = Union["Variable", np.ndarray, float, int]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Variable:
    """A value recorded on a Tape"""

    __slots__ = ("tape", "index", "value")

    def __init__(self, tape: "Tape", index: int, value: np.ndarray):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.value.shape)

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value.item())

    def __add__(self, other: Operand) -> "Variable":
        return add(self, other)

    def __radd__(self, other: Operand) -> "Variable":
        return add(other, self)

    def __sub__(self, other: Operand) -> "Variable":
        return sub(self, other)

    def __rsub__(self, other: Operand) -> "Variable":
        return sub(other, self)

    def __mul__(self, other: Operand) -> "Variable":
        return mul(self, other)

    def __rmul__(self, other: Operand) -> "Variable":
        return mul(other, self)

    def __truediv__(self, other: Operand) -> "Variable":
        return div(self, other)

    def __neg__(self) -> "Variable":
        return neg(self)

    def __matmul__(self, other: Operand) -> "Variable":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Variable(index={self.index}, shape={self.shape})"


class Tape:
    """Append-only record of primitive operations"""

    def __init__(self) -> None:
        self.reset()

    def reset(self) -> None:
        self._values: List[np.ndarray] = []
        self._parents: List[Tuple[int, ...]] = []
        self._backward: List[Optional[BackwardFn]] = []
        self._requires_grad: List[bool] = []
        self._params: Dict[str, Variable] = {}
        self._leaf_names: Dict[int, str] = {}
        self._adjoints: Optional[List[Optional[np.ndarray]]] = None

    def __len__(self) -> int:
        return len(self._values)

    def _append(
        self,
        value: np.ndarray,
        parents: Tuple[int, ...],
        backward: Optional[BackwardFn],
        requires_grad: bool,
    ) -> Variable:
        if self._adjoints is not None:
            raise UsageError("Tape already differentiated; call reset() before reuse")
        index = len(self._values)
        self._values.append(value)
        self._parents.append(parents)
        self._backward.append(backward)
        self._requires_grad.append(requires_grad)
        return Variable(self, index, value)

    def leaf(self, value: ArrayLike, name: Optional[str] = None) -> Variable:
        var = self._append(np.array(value, dtype=np.float64), (), None, True)
        if name is not None:
            self._leaf_names[var.index] = name
        return var

    def param(self, name: str, array: np.ndarray) -> Variable:
        """Bind a named parameter once per tape; later calls reuse the same leaf"""
        if name not in self._params:
            var = self._append(np.asarray(array, dtype=np.float64), (), None, True)
            self._leaf_names[var.index] = name
            self._params[name] = var
        return self._params[name]

    def constant(self, value: ArrayLike) -> Variable:
        return self._append(np.asarray(value, dtype=np.float64), (), None, False)

    def record(
        self, value: np.ndarray, parents: Sequence[Variable], backward: BackwardFn
    ) -> Variable:
        for p in parents:
            if p.tape is not self:
                raise UsageError("Cannot combine Variables from different tapes")
        requires_grad = any(self._requires_grad[p.index] for p in parents)
        return self._append(
            value,
            tuple(p.index for p in parents),
            backward if requires_grad else None,
            requires_grad,
        )

    def backward(self, loss: Variable) -> Dict[str, np.ndarray]:
        """Accumulate adjoints of a scalar loss; returns gradients of named leaves"""
        if loss.tape is not self:
            raise UsageError("Loss Variable belongs to a different tape")
        if loss.value.size != 1:
            raise UsageError(f"Loss must be scalar, got shape {loss.shape}")
        if self._adjoints is not None:
            raise UsageError("Tape already differentiated; call reset() before reuse")

        adjoints: List[Optional[np.ndarray]] = [None] * len(self._values)
        adjoints[loss.index] = np.ones_like(loss.value)
        for i in range(loss.index, -1, -1):
            g = adjoints[i]
            fn = self._backward[i]
            if g is None or fn is None:
                continue
            for parent, pg in zip(self._parents[i], fn(g)):
                if pg is None or not self._requires_grad[parent]:
                    continue
                current = adjoints[parent]
                adjoints[parent] = pg if current is None else current + pg
        self._adjoints = adjoints

        return {name: self.grad(self._variable(i)) for i, name in self._leaf_names.items()}

    def _variable(self, index: int) -> Variable:
        return Variable(self, index, self._values[index])

    def grad(self, var: Variable) -> np.ndarray:
        if self._adjoints is None:
            raise UsageError("backward() has not been called on this tape")
        g = self._adjoints[var.index]
        return np.zeros_like(var.value) if g is None else np.asarray(g, dtype=np.float64)


def _lift(tape: Tape, x: Operand) -> Variable:
    if isinstance(x, Variable):
        return x
    return tape.constant(x)


def _pair_tape(a: Operand, b: Operand) -> Tuple[Variable, Variable]:
    if isinstance(a, Variable):
        tape = a.tape
    elif isinstance(b, Variable):
        tape = b.tape
    else:
        raise UsageError("At least one operand must be a Variable")
    return _lift(tape, a), _lift(tape, b)


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast adjoint back down to `shape`"""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def to_complex(pairs: np.ndarray) -> np.ndarray:
    return pairs[..., 0] + 1j * pairs[..., 1]


def to_pairs(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag], axis=-1)


def _complex_shape(var: Variable) -> Tuple[int, ...]:
    if var.ndim == 0 or var.shape[-1] != 2:
        raise DimensionError(f"Complex operand needs a trailing axis of 2, got {var.shape}")
    return var.shape[:-1]


# --- real primitives -------------------------------------------------------


def add(a: Operand, b: Operand) -> Variable:
    a, b = _pair_tape(a, b)
    sa, sb = a.shape, b.shape
    return a.tape.record(
        a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def sub(a: Operand, b: Operand) -> Variable:
    a, b = _pair_tape(a, b)
    sa, sb = a.shape, b.shape
    return a.tape.record(
        a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb))
    )


def mul(a: Operand, b: Operand) -> Variable:
    a, b = _pair_tape(a, b)
    av, bv = a.value, b.value
    return a.tape.record(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def div(a: Operand, b: Operand) -> Variable:
    a, b = _pair_tape(a, b)
    av, bv = a.value, b.value
    out = av / bv
    return a.tape.record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)),
    )


def neg(a: Variable) -> Variable:
    return a.tape.record(-a.value, (a,), lambda g: (-g,))


def scale(a: Variable, factor: float) -> Variable:
    return a.tape.record(a.value * factor, (a,), lambda g: (g * factor,))


def matmul(a: Operand, b: Operand) -> Variable:
    a, b = _pair_tape(a, b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise DimensionError(f"matmul shapes {av.shape} and {bv.shape} do not align")
    return a.tape.record(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def sin(a: Variable) -> Variable:
    av = a.value
    return a.tape.record(np.sin(av), (a,), lambda g: (g * np.cos(av),))


def cos(a: Variable) -> Variable:
    av = a.value
    return a.tape.record(np.cos(av), (a,), lambda g: (-g * np.sin(av),))


def sqrt(a: Variable) -> Variable:
    out = np.sqrt(a.value)
    return a.tape.record(out, (a,), lambda g: (0.5 * g / out,))


def square(a: Variable) -> Variable:
    av = a.value
    return a.tape.record(av * av, (a,), lambda g: (2.0 * g * av,))


def abs_smooth(a: Variable, delta: float = SMOOTH_DELTA) -> Variable:
    """sqrt(x^2 + delta^2) - delta: |x| with a smoothed kink, exactly 0 at 0"""
    av = a.value
    root = np.sqrt(av * av + delta * delta)
    return a.tape.record(root - delta, (a,), lambda g: (g * av / root,))


def smooth_sqrt(a: Variable, delta: float = SMOOTH_DELTA) -> Variable:
    """sqrt(x + delta^2) - delta for x >= 0; finite slope at 0"""
    root = np.sqrt(a.value + delta * delta)
    return a.tape.record(root - delta, (a,), lambda g: (0.5 * g / root,))


def sum(a: Variable, axis: "int | Tuple[int, ...] | None" = None) -> Variable:
    shape = a.shape
    if axis is None:
        axes: Tuple[int, ...] = tuple(range(len(shape)))
    elif isinstance(axis, int):
        axes = (axis % len(shape),)
    else:
        axes = tuple(ax % len(shape) for ax in axis)
    kept = tuple(1 if i in axes else n for i, n in enumerate(shape))

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (np.broadcast_to(np.reshape(g, kept), shape).copy(),)

    return a.tape.record(np.sum(a.value, axis=axes), (a,), backward)


def mean(a: Variable, axis: "int | Tuple[int, ...] | None" = None) -> Variable:
    total = sum(a, axis)
    count = a.value.size // max(total.value.size, 1)
    return scale(total, 1.0 / count)


def reshape(a: Variable, shape: Sequence[int]) -> Variable:
    original = a.shape
    return a.tape.record(
        np.reshape(a.value, tuple(shape)), (a,), lambda g: (np.reshape(g, original),)
    )


def transpose(a: Variable, axes: Sequence[int]) -> Variable:
    perm = tuple(axes)
    inverse = tuple(np.argsort(perm))
    return a.tape.record(
        np.transpose(a.value, perm), (a,), lambda g: (np.transpose(g, inverse),)
    )


def take(a: Variable, indices: Sequence[int], axis: int) -> Variable:
    idx = np.asarray(indices, dtype=np.int64)
    axis = axis % a.ndim
    shape = a.shape

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        out = np.zeros(shape)
        moved = np.moveaxis(out, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (out,)

    return a.tape.record(np.take(a.value, idx, axis=axis), (a,), backward)


# --- complex-pair primitives -----------------------------------------------


def cmul(a: Operand, b: Operand) -> Variable:
    """Complex product of two pair arrays, broadcasting over the complex shape"""
    a, b = _pair_tape(a, b)
    sa, sb = _complex_shape(a), _complex_shape(b)
    za, zb = to_complex(a.value), to_complex(b.value)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        zg = to_complex(g)
        return (
            to_pairs(_unbroadcast(zg * np.conj(zb), sa)),
            to_pairs(_unbroadcast(zg * np.conj(za), sb)),
        )

    return a.tape.record(to_pairs(za * zb), (a, b), backward)


def cabs2(a: Variable) -> Variable:
    """|z|^2 of a pair array; drops the trailing axis"""
    _complex_shape(a)
    av = a.value
    return a.tape.record(
        np.sum(av * av, axis=-1), (a,), lambda g: (2.0 * av * g[..., None],)
    )


def cmode_contract(t: Variable, mode: int, matrix: Variable) -> Variable:
    """Mode-`mode` contraction of a complex pair tensor with a P x N pair matrix"""
    zt = to_complex(t.value)
    zm = to_complex(matrix.value)
    out = contract_array(zt, mode, zm)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        zg = to_complex(g)
        grad_t = contract_array(zg, mode, np.conj(zm).T)
        grad_m = np.tensordot(
            np.moveaxis(zg, mode, 0), np.moveaxis(np.conj(zt), mode, 0),
            axes=(list(range(1, zg.ndim)), list(range(1, zt.ndim))),
        )
        return to_pairs(grad_t), to_pairs(grad_m)

    return t.tape.record(to_pairs(out), (t, matrix), backward)


def cdft(a: Variable, axes: Sequence[int]) -> Variable:
    """Centered unitary DFT over complex axes of a pair array"""
    complex_ndim = len(_complex_shape(a))
    ax = tuple(x % complex_ndim for x in axes)
    out = centered_dft(to_complex(a.value), ax)
    return a.tape.record(
        to_pairs(out), (a,), lambda g: (to_pairs(centered_idft(to_complex(g), ax)),)
    )
