import pytest
from sympy import Matrix, Rational

from presymplectic_strata.services.algebra.fields import DiffForm
from presymplectic_strata.services.algebra.polynomials import Chart
from presymplectic_strata.services.foliation.connection import CutoffSpec, special_connection
from presymplectic_strata.services.geometry.stratify import FormField


class TestSpecialConnection:
    def test_constant_form_is_parallel_for_flat_metric(self, planar_r4):
        record = special_connection(planar_r4, (0, 0, 0, 0))
        assert record.parallel
        assert all(b.is_zero_matrix for b in record.correction)
        assert all(g.is_zero_matrix for g in record.christoffel)
        assert record.kernel_dim == 2

    def test_symplectic_form_is_made_parallel(self):
        chart = Chart(("x1", "x2"))
        x1 = chart.gens[0]
        omega = FormField(DiffForm(chart, 2, {(0, 1): 1 + x1}))
        record = special_connection(omega, (0, 0))
        assert record.parallel
        assert record.correction[0] == Matrix([[Rational(1, 2), 0], [0, Rational(1, 2)]])
        assert record.correction[1].is_zero_matrix

    def test_model_form_obstruction_lives_on_the_kernel(self, model_form):
        record = special_connection(model_form, (0, 0, 0, 0))
        assert not record.parallel
        assert record.kernel_dim == 2
        assert record.obstruction_on_kernel_only
        assert any(not block.is_zero_matrix for block in record.kernel_block)
        assert record.residual[0][0, 1] == 1

    def test_curved_metric(self, planar_r4, r4):
        x1 = r4.gens[0]
        metric = [[1 + x1**2 if i == j == 0 else int(i == j) for j in range(4)] for i in range(4)]
        record = special_connection(planar_r4, (1, 0, 0, 0), metric=metric)
        assert record.christoffel[0][0, 0] != 0
        assert record.parallel

    def test_metric_must_be_positive_definite(self, planar_r4):
        metric = [[-1 if i == j == 0 else int(i == j) for j in range(4)] for i in range(4)]
        with pytest.raises(ValueError):
            special_connection(planar_r4, (0, 0, 0, 0), metric=metric)

    def test_cutoff_is_recorded(self, planar_r4):
        cutoff = CutoffSpec(inner_radius=0.25, outer_radius=0.5)
        assert special_connection(planar_r4, (0, 0, 0, 0), cutoff=cutoff).cutoff == cutoff
