from typing import Callable

import numpy as np
import pytest

from src.core import autodiff as ad
from src.core.autodiff import Tape, Variable
from src.core.errors import DimensionError, UsageError

Builder = Callable[[Tape, Variable], Variable]


def _check_gradient(build: Builder, x: np.ndarray, fd_grad: Callable, rtol: float = 1e-5) -> None:
    def loss(value: np.ndarray) -> float:
        tape = Tape()
        return build(tape, tape.leaf(value, name="x")).item()

    tape = Tape()
    out = build(tape, tape.leaf(x, name="x"))
    analytic = tape.backward(out)["x"]
    np.testing.assert_allclose(analytic, fd_grad(loss, x), rtol=rtol, atol=1e-7)


class TestRealPrimitives:
    def test_elementwise_chain(self, rng: np.random.Generator, fd_grad: Callable) -> None:
        x = rng.uniform(-1, 1, size=(3, 4))
        _check_gradient(lambda t, v: ad.sum(ad.mul(ad.sin(v), ad.cos(v) + v)), x, fd_grad)

    def test_division_and_sqrt(self, rng: np.random.Generator, fd_grad: Callable) -> None:
        x = rng.uniform(0.5, 2.0, size=5)
        _check_gradient(lambda t, v: ad.mean(ad.div(ad.sqrt(v), ad.square(v) + 1.0)), x, fd_grad)

    def test_matmul_both_operands(self, rng: np.random.Generator, fd_grad: Callable) -> None:
        w = rng.standard_normal((4, 2))
        x = rng.standard_normal((3, 4))
        _check_gradient(lambda t, v: ad.sum(ad.square(ad.matmul(v, w))), x, fd_grad)
        _check_gradient(lambda t, v: ad.sum(ad.square(ad.matmul(x, v))), w, fd_grad)

    def test_broadcast_adjoints_reduce_to_operand_shape(self, rng: np.random.Generator) -> None:
        tape = Tape()
        a = tape.leaf(rng.standard_normal((3, 1)), name="a")
        b = tape.leaf(rng.standard_normal((1, 4)), name="b")
        grads = tape.backward(ad.sum(a + b))
        np.testing.assert_allclose(grads["a"], np.full((3, 1), 4.0))
        np.testing.assert_allclose(grads["b"], np.full((1, 4), 3.0))

    def test_reshape_transpose_and_partial_sums(
        self, rng: np.random.Generator, fd_grad: Callable
    ) -> None:
        x = rng.standard_normal((2, 3, 4))

        def build(t: Tape, v: Variable) -> Variable:
            moved = ad.transpose(v, (2, 0, 1))
            flat = ad.reshape(moved, (4, 6))
            return ad.sum(ad.square(ad.sum(flat, axis=1)))

        _check_gradient(build, x, fd_grad)

    def test_take_accumulates_repeated_indices(self) -> None:
        tape = Tape()
        x = tape.leaf(np.array([1.0, 2.0, 3.0]), name="x")
        grads = tape.backward(ad.sum(ad.take(x, [0, 0, 2], axis=0)))
        np.testing.assert_allclose(grads["x"], [2.0, 0.0, 1.0])

    def test_smoothed_magnitudes_vanish_at_zero(self) -> None:
        tape = Tape()
        zero = tape.leaf(np.zeros(3), name="x")
        assert ad.abs_smooth(zero).value == pytest.approx(np.zeros(3))
        out = ad.sum(ad.smooth_sqrt(zero))
        assert out.item() == pytest.approx(0.0)
        grad = tape.backward(out)["x"]
        assert np.all(np.isfinite(grad))
        np.testing.assert_allclose(grad, 0.5 / ad.SMOOTH_DELTA)

    def test_abs_smooth_tracks_absolute_value(self) -> None:
        tape = Tape()
        x = tape.leaf(np.array([-2.0, 3.0]))
        np.testing.assert_allclose(ad.abs_smooth(x).value, [2.0, 3.0], atol=1e-7)


class TestComplexPrimitives:
    def test_cmul_and_cabs2(self, rng: np.random.Generator, fd_grad: Callable) -> None:
        a = rng.standard_normal((3, 2))
        b = rng.standard_normal((3, 2))
        _check_gradient(lambda t, v: ad.sum(ad.cabs2(ad.cmul(v, b))), a, fd_grad)
        _check_gradient(lambda t, v: ad.sum(ad.cabs2(ad.cmul(a, v) + v)), b, fd_grad)

    def test_cmul_values(self) -> None:
        tape = Tape()
        out = ad.cmul(tape.leaf([1.0, 2.0]), tape.leaf([3.0, -1.0]))
        np.testing.assert_allclose(ad.to_complex(out.value), (1 + 2j) * (3 - 1j))

    def test_cmode_contract_gradients(self, rng: np.random.Generator, fd_grad: Callable) -> None:
        core = rng.standard_normal((2, 3, 2))
        matrix = rng.standard_normal((4, 3, 2))
        target = rng.standard_normal((2, 4, 2))

        def loss_core(t: Tape, v: Variable) -> Variable:
            diff = ad.cmode_contract(v, 1, t.constant(matrix)) - target
            return ad.sum(ad.cabs2(diff))

        def loss_matrix(t: Tape, v: Variable) -> Variable:
            diff = ad.cmode_contract(t.constant(core), 1, v) - target
            return ad.sum(ad.cabs2(diff))

        _check_gradient(loss_core, core, fd_grad)
        _check_gradient(loss_matrix, matrix, fd_grad)

    def test_cdft_gradient(self, rng: np.random.Generator, fd_grad: Callable) -> None:
        x = rng.standard_normal((4, 6, 2))
        target = rng.standard_normal((4, 6, 2))
        weights = rng.uniform(0.1, 1.0, size=(4, 6))
        _check_gradient(
            lambda t, v: ad.sum(ad.mul(ad.cabs2(ad.cdft(v, (0, 1)) - target), weights)),
            x,
            fd_grad,
        )

    def test_complex_ops_need_pair_axis(self) -> None:
        tape = Tape()
        with pytest.raises(DimensionError):
            ad.cabs2(tape.leaf(np.ones((3, 3))))


class TestTape:
    def test_params_bind_once(self) -> None:
        tape = Tape()
        w = np.ones(3)
        assert tape.param("w", w).index == tape.param("w", w).index

    def test_shared_parameter_gradients_add_up(self) -> None:
        tape = Tape()
        w = tape.param("w", np.array(2.0))
        grads = tape.backward(w * w + tape.param("w", np.array(2.0)))
        assert grads["w"] == pytest.approx(5.0)

    def test_loss_must_be_scalar(self) -> None:
        tape = Tape()
        with pytest.raises(UsageError):
            tape.backward(tape.leaf(np.ones(2)))

    def test_tape_cannot_be_reused_without_reset(self) -> None:
        tape = Tape()
        x = tape.leaf(1.0)
        tape.backward(ad.square(x))
        with pytest.raises(UsageError):
            tape.backward(ad.square(x))
        tape.reset()
        assert len(tape) == 0

    def test_mixing_tapes_is_rejected(self) -> None:
        with pytest.raises(UsageError):
            ad.add(Tape().leaf(1.0), Tape().leaf(2.0))

    def test_constants_get_no_gradient(self) -> None:
        tape = Tape()
        c = tape.constant(np.ones(2))
        x = tape.leaf(np.ones(2), name="x")
        grads = tape.backward(ad.sum(c * x))
        assert tape.grad(c) == pytest.approx(np.zeros(2))
        np.testing.assert_allclose(grads["x"], np.ones(2))

    def test_grad_before_backward(self) -> None:
        tape = Tape()
        with pytest.raises(UsageError):
            tape.grad(tape.leaf(1.0))
