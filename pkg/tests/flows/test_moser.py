from math import log, sqrt

import numpy as np
import pytest
from sympy import Rational

from presymplectic_strata.core.config import MoserSettings
from presymplectic_strata.errors import SingularSystemError
from presymplectic_strata.services.algebra.fields import DiffForm, MultiVector
from presymplectic_strata.services.algebra.maps import PolyMap
from presymplectic_strata.services.algebra.polynomials import Chart
from presymplectic_strata.services.flows.moser import (
    area_scaling_family,
    form_family,
    interpolate_forms,
    moser_solve,
    radial_flow,
    rescaling_check,
    timed_chart,
)
from presymplectic_strata.services.foliation.tubes import TubeSystem
from presymplectic_strata.services.geometry.stratify import FormField


@pytest.fixture
def plane():
    return Chart(("x1", "x2"))


@pytest.fixture
def hyperplane_tube(r4):
    return TubeSystem(r4, (0,))


@pytest.fixture
def box_points():
    return np.random.default_rng(3).uniform(-1.0, 1.0, size=(100, 2))


class TestRadialFlow:
    def test_time_zero_is_identity(self, hyperplane_tube, r4):
        flow = radial_flow(hyperplane_tube, 0)
        assert flow.map == PolyMap.identity(r4)
        x1 = r4.gens[0]
        assert flow.generator == MultiVector.vector(r4, [-x1, 0, 0, 0])

    def test_stratum_points_are_fixed(self, hyperplane_tube):
        for t in (Rational(1, 4), Rational(1, 2), 1):
            assert radial_flow(hyperplane_tube, t).map((0, 2, 3, 4)) == (0, 2, 3, 4)

    def test_fibers_shrink_linearly(self, hyperplane_tube):
        flow = radial_flow(hyperplane_tube, Rational(1, 4))
        assert flow.map((4, 1, 1, 1)) == (3, 1, 1, 1)

    def test_time_one_is_the_retraction(self, hyperplane_tube):
        flow = radial_flow(hyperplane_tube, 1)
        assert flow.map == hyperplane_tube.retraction
        assert flow.generator is None
        assert flow.gradient_time == float("inf")

    def test_gradient_time_reparametrization(self, hyperplane_tube):
        assert radial_flow(hyperplane_tube, Rational(1, 2)).gradient_time == pytest.approx(log(2) / 2)

    def test_time_outside_unit_interval(self, hyperplane_tube):
        with pytest.raises(ValueError):
            radial_flow(hyperplane_tube, 2)


class TestRescalingCheck:
    def test_fully_normal_block_doubles(self, plane):
        report = rescaling_check(TubeSystem(plane, (0, 1)), FormField(DiffForm(plane, 2, {(0, 1): 1})))
        assert report.exponent == 2
        assert report.exponential
        assert report.lie_derivative_holds
        assert not report.matches_claim
        assert report.blocks[0].fitted_rate == pytest.approx(2.0, abs=1e-9)

    def test_stratum_block_does_not_scale(self, r4):
        report = rescaling_check(TubeSystem(r4, (0,)), FormField(DiffForm(r4, 2, {(2, 3): 1})))
        assert report.exponent == 0
        assert report.lie_derivative_holds

    def test_mixed_blocks(self, model_form, hyperplane_tube):
        report = rescaling_check(hyperplane_tube, model_form)
        assert [b.exponent for b in report.blocks] == [2, 0]
        assert report.exponent is None
        assert report.exponential
        assert report.lie_derivative_holds

    def test_inhomogeneous_block_is_not_exponential(self, r4, hyperplane_tube):
        x1 = r4.gens[0]
        report = rescaling_check(hyperplane_tube, FormField(DiffForm(r4, 2, {(0, 1): 1 + x1})))
        assert not report.exponential
        assert report.blocks[0].exponent is None


class TestFormFamily:
    def test_area_primitive(self, plane):
        family = area_scaling_family(plane)
        x1, x2, _ = family.timed.gens
        quarter = family.timed.constant(Rational(1, 4))
        assert family.primitive == DiffForm(family.timed, 1, {(0,): -quarter * x2, (1,): quarter * x1})

    def test_dt_legs_are_rejected(self, plane):
        timed = timed_chart(plane)
        with pytest.raises(ValueError):
            form_family(DiffForm(timed, 2, {(0, 2): 1}))

    def test_family_must_be_closed(self, r3):
        timed = timed_chart(r3)
        x3 = timed.gens[2]
        with pytest.raises(ValueError):
            form_family(DiffForm(timed, 2, {(0, 1): x3}))

    def test_time_name_avoids_clashes(self):
        assert timed_chart(Chart(("t", "x"))).coord_names == ("t", "x", "t_")


class TestInterpolateForms:
    def test_model_family(self, model_form, hyperplane_tube, r4):
        family, record = interpolate_forms(model_form, hyperplane_tube, samples=5)
        x1 = r4.gens[0]
        assert record.endpoints_exact
        assert family.at(Rational(1, 2)) == DiffForm(r4, 2, {(0, 1): r4.constant(Rational(1, 4)) * x1, (2, 3): 1})
        assert family.at(0) == DiffForm(r4, 2, {(2, 3): 1})
        assert family.at(1) == model_form.form

    def test_beta_vanishes_on_normal_directions(self, model_form, hyperplane_tube):
        _, record = interpolate_forms(model_form, hyperplane_tube, samples=20)
        assert record.normal_vanishing
        assert record.normal_contraction <= 1e-9

    def test_frame_is_the_lifted_lower_g_frame(self, model_form, hyperplane_tube, r4):
        family, _ = interpolate_forms(model_form, hyperplane_tube, samples=3)
        assert [v.components() for v in family.frame] == [
            MultiVector.coordinate_vector(r4, 2).components(),
            MultiVector.coordinate_vector(r4, 3).components(),
        ]


class TestMoserSolve:
    def test_area_scaling_family(self, plane, box_points):
        result = moser_solve(area_scaling_family(plane), box_points)
        assert result.final_residual <= 1e-8
        assert result.within_tolerance
        assert np.allclose(result.trajectories[:, -1, :], box_points / sqrt(1.5), atol=1e-8)

    def test_step_halving_shows_fourth_order(self, plane, box_points):
        result = moser_solve(area_scaling_family(plane), box_points[:10], steps=4)
        assert result.halving_ratio >= 8
        assert result.converged

    def test_constant_family_does_not_move(self, plane, box_points):
        family = form_family(DiffForm(timed_chart(plane), 2, {(0, 1): 1}))
        result = moser_solve(family, box_points[:5], steps=4)
        assert np.array_equal(result.trajectories[:, -1, :], box_points[:5])
        assert result.final_residual == 0.0

    def test_model_gluing_family(self, model_form, hyperplane_tube):
        family, _ = interpolate_forms(model_form, hyperplane_tube, samples=5)
        points = np.random.default_rng(5).uniform(-1.0, 1.0, size=(100, 4))
        result = moser_solve(family, points, settings=MoserSettings(steps=8))
        assert result.final_residual <= 1e-6
        assert result.converged
        assert result.orientation == "lower->higher"

    def test_singular_block_is_named(self, plane):
        timed = timed_chart(plane)
        family = form_family(DiffForm(timed, 2, {(0, 1): timed.gens[2]}))
        with pytest.raises(SingularSystemError) as info:
            moser_solve(family, [[0.5, 0.5]], steps=2)
        assert info.value.time == 0.0

    def test_reversed_orientation(self, plane, box_points):
        result = moser_solve(area_scaling_family(plane), box_points[:3], steps=4)
        back = result.reversed()
        assert back.orientation == "higher->lower"
        assert back.times[0] == pytest.approx(0.0)
        assert np.array_equal(back.trajectories[:, 0, :], result.trajectories[:, -1, :])
        assert back.reversed().orientation == "lower->higher"

    def test_csv_export(self, plane, box_points, tmp_path):
        result = moser_solve(area_scaling_family(plane), box_points[:2], steps=2)
        path = result.to_csv(tmp_path / "flows" / "area.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "sample,t,x1,x2"
        assert len(lines) == 1 + 2 * 3

    def test_summary(self, plane, box_points):
        summary = moser_solve(area_scaling_family(plane), box_points[:2], steps=4).summary()
        assert summary.samples == 2
        assert summary.order == 4
