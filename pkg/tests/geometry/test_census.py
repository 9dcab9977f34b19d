import numpy as np
import pytest
from sympy import Rational

from presymplectic_strata.core.config import NumericSettings, SamplingSettings
from presymplectic_strata.services.algebra.fields import DiffForm
from presymplectic_strata.services.geometry.census import (
    local_dimension,
    niceness_report,
    snap_point,
)
from presymplectic_strata.services.geometry.stratify import FormField


class TestSnapPoint:
    def test_snaps_to_small_denominators(self):
        assert snap_point((0.5, -0.25, 1e-17)) == (Rational(1, 2), Rational(-1, 4), 0)


class TestLocalDimension:
    def test_hyperplane_has_dimension_three(self, model_form, rng):
        dim = local_dimension(
            model_form, 2, np.array([0.0, 0.3, -0.2, 0.1]), rng, NumericSettings(), SamplingSettings()
        )
        assert dim == 3

    def test_open_stratum_has_full_dimension(self, model_form, rng):
        dim = local_dimension(
            model_form, 0, np.array([0.5, 0.3, -0.2, 0.1]), rng, NumericSettings(), SamplingSettings()
        )
        assert dim == 4


class TestNicenessReport:
    def test_model_form_is_nice(self, model_form, unit_box):
        report = niceness_report(model_form, unit_box, samples=6, seed=11)
        census = {s.m: s for s in report.strata}
        assert sorted(census) == [0, 2]
        assert census[0].local_dim == 4
        assert census[2].local_dim == 3
        assert census[2].expected_dim == 3
        for s in report.strata:
            assert s.admissible
            assert s.checked_points > 0
            assert s.transversal_points == s.checked_points
        assert [(f.sampled, f.closure_of) for f in report.frontiers] == [(2, 0)]
        assert report.frontiers[0].adherent == report.frontiers[0].checked
        assert report.nice

    def test_constant_degenerate_form_is_not_nice(self, planar_r4, unit_box):
        report = niceness_report(planar_r4, unit_box, samples=4, seed=11)
        assert [s.m for s in report.strata] == [2]
        assert report.strata[0].transversal_points == 0
        assert not report.nice

    @pytest.mark.slow
    def test_zero_form_is_inadmissible(self, r4, unit_box):
        report = niceness_report(FormField(DiffForm.zero(r4, 2)), unit_box, samples=3, seed=11)
        assert [s.m for s in report.strata] == [4]
        assert not report.strata[0].admissible
        assert any("inadmissible" in w for w in report.warnings)
        assert not report.nice
