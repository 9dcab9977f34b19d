"""Explicit fixed-step Runge-Kutta integrators given by a Butcher tableau."""

from collections.abc import Callable, Sequence
from typing import Any

import numpy as np
from sympy import Rational

TangentFunction = Callable[[Any, Any], Any]


class RungeKutta:
    """A general explicit Runge-Kutta step.

    ``a_tableau`` holds the strictly lower rows of the Butcher matrix, ``c_tableau`` the
    nodes of stages 2.., ``b_tableau`` the weights. States only need ``+`` and
    scalar ``*``, so numpy arrays and exact multivector fields both work.
    """

    def __init__(
        self,
        a_tableau: Sequence[Sequence[float]],
        b_tableau: Sequence[float],
        c_tableau: Sequence[float],
        order: int,
    ):
        if len(b_tableau) != len(c_tableau) + 1:
            raise ValueError("The length of b_tableau should be exactly one more than the length of c_tableau.")
        if len(b_tableau) != len(a_tableau) + 1:
            raise ValueError("The length of b_tableau should be exactly one more than the length of a_tableau.")
        self.a_tableau = a_tableau
        self.b_tableau = b_tableau
        self.c_tableau = c_tableau
        self.order = order

    def __call__(self, tangent_func: TangentFunction, t: Any, y: Any, dt: Any) -> Any:
        k = [tangent_func(t, y)]
        zero = 0 * y
        for c_n, a_n_row in zip(self.c_tableau, self.a_tableau):
            t_n = t + dt * c_n
            delta_n = sum((a_i * k_i for a_i, k_i in zip(a_n_row, k) if a_i != 0.0), zero)
            k.append(tangent_func(t_n, y + dt * delta_n))
        delta = sum((b_i * k_i for b_i, k_i in zip(self.b_tableau, k) if b_i != 0.0), zero)
        return y + dt * delta


class RungeKutta4(RungeKutta):
    """The classical fourth order method; ``exact`` keeps the tableau in rationals."""

    def __init__(self, exact: bool = False):
        q = Rational if exact else (lambda p, r: p / r)
        super().__init__(
            a_tableau=[[q(1, 2)], [0, q(1, 2)], [0, 0, 1]],
            b_tableau=[q(1, 6), q(1, 3), q(1, 3), q(1, 6)],
            c_tableau=[q(1, 2), q(1, 2), 1],
            order=4,
        )


def integrate(
    stepper: RungeKutta, tangent_func: TangentFunction, y0: np.ndarray, t0: float, t1: float, steps: int
) -> tuple[np.ndarray, np.ndarray]:
    """States at the ``steps + 1`` equally spaced times of ``[t0, t1]``."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    times = np.linspace(t0, t1, steps + 1)
    states = np.empty((steps + 1,) + np.shape(y0))
    states[0] = y0
    y = np.asarray(y0, dtype=float)
    for i in range(steps):
        y = stepper(tangent_func, times[i], y, times[i + 1] - times[i])
        states[i + 1] = y
    return times, states
