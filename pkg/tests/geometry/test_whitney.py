import numpy as np
import pytest

from presymplectic_strata.services.geometry.whitney import (
    ApproachSequence,
    ImplicitStratum,
    ParametrizedStratum,
    Verdict,
    cusp_family,
    richardson_limit,
    whitney_check,
)


class TestRichardsonLimit:
    def test_linear_rate_extrapolates_to_zero(self):
        assert richardson_limit([0.5, 0.25, 0.125]) == pytest.approx(0.0)

    def test_constant_sequence(self):
        assert richardson_limit([1.0, 1.0, 1.0, 1.0]) == pytest.approx(1.0)

    def test_short_sequence(self):
        assert richardson_limit([0.3, 0.2]) == pytest.approx(0.2)


class TestImplicitStratum:
    def test_hyperplane_tangent(self, model_form):
        lower = ImplicitStratum(model_form, 2)
        assert (lower.codim, lower.dim) == (1, 3)
        tangent = lower.tangent_at_point(np.array([0.0, 0.2, -0.1, 0.3]))
        assert tangent.shape == (4, 3)
        assert np.allclose(tangent[0], 0.0)

    def test_open_stratum_tangent_is_everything(self, model_form):
        higher = ImplicitStratum(model_form, 0)
        assert np.allclose(higher.tangent_at_point(np.array([0.5, 0, 0, 0])), np.eye(4))


class TestWhitneyCheck:
    def test_open_dense_stratum_passes(self, model_form):
        report = whitney_check(
            ImplicitStratum(model_form, 0),
            ImplicitStratum(model_form, 2),
            (0.0, 0.2, -0.1, 0.3),
            seed=1,
        )
        assert report.condition_a is Verdict.PASS
        assert report.condition_b is Verdict.PASS
        assert report.witness is None
        assert len(report.sequences) > 0
        assert (report.higher, report.lower) == ("Y_0", "Y_2")

    def test_cusp_fails_condition_b(self):
        higher, lower, lower_tangent, sequences = cusp_family()
        report = whitney_check(higher, lower, (0.0, 0.0, 0.0), lower_tangent, sequences)
        assert report.condition_b is Verdict.FAIL
        assert report.condition_a is Verdict.PASS
        assert report.witness == 0
        for record in report.sequences:
            assert record.gaps_b[-1] == pytest.approx(1.0, abs=1e-5)
            assert abs(record.secant[0]) == pytest.approx(1.0, abs=1e-5)

    def test_single_stratum_passes_vacuously(self):
        higher, _, _, _ = cusp_family()
        report = whitney_check(higher, None, (0.0, 0.0, 0.0))
        assert report.condition_a is Verdict.PASS
        assert report.condition_b is Verdict.PASS
        assert report.lower is None
        assert report.sequences == []

    def test_explicit_lower_needs_tangent(self):
        higher, lower, _, sequences = cusp_family()
        with pytest.raises(ValueError):
            whitney_check(higher, lower, (0.0, 0.0, 0.0), sequences=sequences)

    def test_in_between_gap_is_inconclusive(self):
        line = ParametrizedStratum("line", 1, lambda u: np.array([u[0], 0.0]))
        tilted = ParametrizedStratum(
            "tilted line", 1, lambda u: np.array([u[0], 5e-6 * u[0]])
        )
        sequences = [ApproachSequence(lambda t: np.array([t]), lambda t: np.array([t, 0.0]))]
        report = whitney_check(
            tilted, line, (0.0, 0.0), lower_tangent=np.array([[1.0], [0.0]]), sequences=sequences
        )
        assert report.condition_a is Verdict.INCONCLUSIVE
