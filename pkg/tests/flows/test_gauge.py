import pytest
from sympy import Rational

from presymplectic_strata.errors import AccuracyExhaustedError
from presymplectic_strata.services.algebra.fields import MultiVector, schouten
from presymplectic_strata.services.algebra.polynomials import JetOrder
from presymplectic_strata.services.flows.gauge import GaugeFamily, field_size, gauge_flow


@pytest.fixture
def chart(flat_r3):
    return flat_r3.chart


@pytest.fixture
def shear(chart):
    """x2 d/dx1"""
    return MultiVector.vector(chart, [chart.gens[1], 0, 0, 0])


@pytest.fixture
def delta0(chart):
    """d/dx2^d/dx3"""
    return MultiVector(chart, 2, {(1, 2): 1})


class TestGaugeFamily:
    def test_generator_must_have_degree_zero(self, chart, delta0):
        with pytest.raises(ValueError):
            GaugeFamily(chart, (delta0,))

    def test_caps_refuse_constant_coefficients(self, chart):
        with pytest.raises(ValueError):
            GaugeFamily(chart, (MultiVector.coordinate_vector(chart, 0),), caps=JetOrder(2, 1))

    def test_exhausted_caps(self, chart, shear):
        with pytest.raises(AccuracyExhaustedError):
            GaugeFamily(chart, (shear,), caps=JetOrder(-1))

    def test_automorphism_is_the_reversed_exponential(self, chart, shear):
        family = GaugeFamily(chart, (shear,))
        x1, x2 = chart.gens[:2]
        y = MultiVector.scalar(chart, x1)
        assert family.automorphism(y, Rational(1, 2)) == MultiVector.scalar(chart, x1 - chart.constant(Rational(1, 2)) * x2)
        assert family.automorphism(y, 0) == y

    def test_series_terminates_for_nilpotent_shear(self, chart, shear, delta0):
        powers, terminated = GaugeFamily(chart, (shear,)).adjoint_powers(delta0)
        assert terminated
        assert len(powers) == 2

    def test_series_cut_is_reported(self, chart):
        x1 = chart.gens[0]
        euler = MultiVector.vector(chart, [x1, 0, 0, 0])
        powers, terminated = GaugeFamily(chart, (euler,), max_terms=5).adjoint_powers(MultiVector.scalar(chart, x1))
        assert not terminated
        assert len(powers) == 5

    def test_field_size(self, chart):
        x1 = chart.gens[0]
        v = MultiVector.vector(chart, [chart.constant(Rational(-3, 2)) * x1, 1, 0, 0])
        assert field_size(v) == 1.5
        assert field_size(MultiVector.zero(chart, 1)) == 0.0


class TestGaugeFlow:
    def test_zero_gauge_keeps_delta(self, flat_r3, chart, delta0):
        deltas, family, report = gauge_flow(flat_r3, MultiVector.zero(chart, 1), delta0, steps=4)
        assert all(d == delta0 for d in deltas.values)
        assert family.is_zero
        assert report.phi_identity_at_zero
        assert report.phi_defect == 0.0
        assert report.kernel_preserved

    def test_constant_gauge_matches_exponential_series(self, flat_r3, shear, delta0):
        deltas, _, report = gauge_flow(flat_r3, shear, delta0, steps=4)
        first = schouten(shear, delta0)
        assert first == MultiVector(delta0.chart, 2, {(0, 2): -1})
        for t, value in zip(deltas.times, deltas.values):
            assert value == delta0 + first * t
        assert report.constant
        assert report.terminated
        assert report.series_terms == 2
        assert report.phi_defect == 0.0

    def test_triviality_profile_is_zero(self, flat_r3, shear, delta0):
        _, _, report = gauge_flow(flat_r3, shear, delta0, steps=4)
        assert report.triviality_profile == [0.0] * 5

    def test_shear_preserves_the_kernel(self, flat_r3, shear, delta0):
        _, _, report = gauge_flow(flat_r3, shear, delta0, steps=2)
        assert report.kernel_preserved
        assert report.kernel_failures == []

    def test_fiber_gauge_leaves_the_kernel(self, flat_r3, chart, delta0):
        x1 = chart.gens[0]
        _, _, report = gauge_flow(flat_r3, MultiVector.vector(chart, [0, 0, 0, x1]), delta0, steps=2)
        assert not report.kernel_preserved
        assert "x1" in report.kernel_failures[0]

    def test_time_dependent_gauge(self, flat_r3, chart, shear, delta0):
        deltas, family, report = gauge_flow(flat_r3, [MultiVector.zero(chart, 1), shear], delta0, steps=4)
        assert not family.is_constant
        assert deltas.at(1) == delta0 + schouten(shear, delta0) * Rational(1, 2)
        assert report.terminated is None
        assert report.phi_defect <= 1e-12
        assert report.triviality_profile == [0.0] * 5

    def test_grid_lookup(self, flat_r3, shear, delta0):
        deltas, _, _ = gauge_flow(flat_r3, shear, delta0, steps=4)
        assert deltas.at(Rational(1, 2)) == deltas.values[2]
        with pytest.raises(ValueError):
            deltas.at(Rational(1, 3))

    def test_caps_are_recorded(self, flat_r3, shear, delta0):
        _, family, report = gauge_flow(flat_r3, shear, delta0, steps=2, caps=JetOrder(3, 2))
        assert family.caps == JetOrder(3, 2)
        assert report.caps == "(3,2)"
