import numpy as np
import pytest
from sympy import Rational

from presymplectic_strata.services.flows.integrators import RungeKutta, RungeKutta4, integrate


class TestRungeKutta:
    def test_tableau_lengths_are_checked(self):
        with pytest.raises(ValueError):
            RungeKutta(a_tableau=[[1.0]], b_tableau=[0.5, 0.5], c_tableau=[1.0, 1.0], order=2)

    def test_exponential_growth(self):
        times, states = integrate(RungeKutta4(), lambda t, y: y, np.array([1.0]), 0.0, 1.0, 16)
        assert times[-1] == pytest.approx(1.0)
        assert states[-1, 0] == pytest.approx(np.e, abs=1e-6)

    def test_fourth_order_convergence(self):
        errors = []
        for steps in (4, 8):
            _, states = integrate(RungeKutta4(), lambda t, y: -y, np.array([1.0]), 0.0, 1.0, steps)
            errors.append(abs(states[-1, 0] - np.exp(-1.0)))
        assert errors[0] / errors[1] > 12

    def test_exact_tableau_integrates_cubics_exactly(self):
        stepper = RungeKutta4(exact=True)
        y = Rational(0)
        for i in range(2):
            y = stepper(lambda t, _: t**3, Rational(i, 2), y, Rational(1, 2))
        assert y == Rational(1, 4)

    def test_steps_must_be_positive(self):
        with pytest.raises(ValueError):
            integrate(RungeKutta4(), lambda t, y: y, np.array([1.0]), 0.0, 1.0, 0)
