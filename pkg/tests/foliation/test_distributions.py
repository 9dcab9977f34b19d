import pytest
from sympy import Matrix

from presymplectic_strata.errors import DegenerateFormError, RankJumpError
from presymplectic_strata.services.algebra.fields import DiffForm, MultiVector, exterior_d, interior
from presymplectic_strata.services.algebra.polynomials import Chart
from presymplectic_strata.services.foliation.distributions import (
    FrameDistribution,
    Polarization,
    adapted_frame_matrix,
    frobenius_check,
    gotay_form,
    null_distribution,
    polarization_complement,
    stabilize,
)
from presymplectic_strata.services.geometry.stratify import FormField


@pytest.fixture
def symplectic_r2():
    return FormField(DiffForm(Chart(("x1", "x2")), 2, {(0, 1): 1}))


class TestFrameDistribution:
    def test_declared_rank_must_match(self, r3):
        with pytest.raises(ValueError):
            FrameDistribution(r3, (MultiVector.coordinate_vector(r3, 0),), rank=2)

    def test_contains(self, r3):
        frame = FrameDistribution.coordinate(r3, (0, 1))
        assert frame.contains(MultiVector.vector(r3, [1, 2, 0]), (0, 0, 0))
        assert not frame.contains(MultiVector.coordinate_vector(r3, 2), (0, 0, 0))


class TestNullDistribution:
    def test_planar_form_on_r3(self, planar_r3, r3):
        frame = null_distribution(planar_r3)
        assert frame.rank == 1
        assert frame.fields[0] == MultiVector.coordinate_vector(r3, 2)

    def test_planar_form_on_r4(self, planar_r4, r4):
        frame = null_distribution(planar_r4)
        assert [v.to_text() for v in frame.fields] == ["d/dx3", "d/dx4"]

    def test_model_form_rank_jump(self, model_form, unit_box):
        with pytest.raises(RankJumpError) as excinfo:
            null_distribution(model_form, unit_box)
        assert excinfo.value.witness is not None

    def test_open_region_has_trivial_kernel(self, model_form):
        region = ((1, 2), (-1, 1), (-1, 1), (-1, 1))
        assert null_distribution(model_form, region).rank == 0

    def test_coordinate_aligned_polynomial_kernel(self, r4):
        x3 = r4.gens[2]
        omega = FormField(DiffForm(r4, 2, {(2, 3): 1 + x3**2}))
        frame = null_distribution(omega, ((-1, 1),) * 4)
        assert [v.to_text() for v in frame.fields] == ["d/dx1", "d/dx2"]

    def test_frames_annihilate_the_form(self, planar_r4, r4):
        x1, x2, x3, x4 = r4.gens
        curved = FormField(DiffForm(r4, 2, {(0, 1): 1 + x3, (1, 2): -x1}))
        for omega in (planar_r4, curved):
            for v in null_distribution(omega).fields:
                assert interior(v, omega.form).is_zero


class TestFrobeniusCheck:
    def test_single_coordinate_field(self, r3):
        assert frobenius_check(FrameDistribution.coordinate(r3, (2,)))

    def test_contact_like_pair(self, r3):
        x1 = r3.gens[0]
        frame = FrameDistribution(
            r3,
            (MultiVector.coordinate_vector(r3, 0), MultiVector.vector(r3, [0, 1, x1])),
        )
        assert not frobenius_check(frame)

    def test_rank_degenerate_but_involutive(self, r3):
        x1 = r3.gens[0]
        frame = FrameDistribution(
            r3, (MultiVector.coordinate_vector(r3, 0), MultiVector.vector(r3, [x1, 0, 0])), rank=1
        )
        assert frobenius_check(frame)

    def test_null_foliations_are_integrable(self, planar_r3, planar_r4, r4):
        x1, x2, x3, x4 = r4.gens
        curved = FormField(DiffForm(r4, 2, {(0, 1): 1 + x3, (1, 2): -x1}))
        for omega in (planar_r3, planar_r4, curved):
            assert frobenius_check(null_distribution(omega))


class TestPolarizationComplement:
    def test_euclidean_complement(self, planar_r3, r3):
        pol = polarization_complement(planar_r3, null_distribution(planar_r3))
        assert [v.to_text() for v in pol.g_frame.fields] == ["d/dx1", "d/dx2"]
        assert pol.virtual_dim == 1

    def test_transverse_hint_is_accepted(self, planar_r3, r3):
        hint = FrameDistribution.constant(r3, [[1, 0, 0], [0, 1, 1]])
        pol = polarization_complement(planar_r3, null_distribution(planar_r3), hint)
        assert pol.g_block_at((0, 0, 0)).det() != 0

    def test_degenerate_hint_is_rejected(self, planar_r3, r3):
        hint = FrameDistribution.coordinate(r3, (0, 2))
        with pytest.raises(DegenerateFormError):
            polarization_complement(planar_r3, null_distribution(planar_r3), hint)

    def test_frame_outside_kernel_is_rejected(self, planar_r3, r3):
        with pytest.raises(ValueError):
            polarization_complement(planar_r3, FrameDistribution.coordinate(r3, (0,)))

    def test_adapted_frame_matrix(self, planar_r3):
        pol = polarization_complement(planar_r3, null_distribution(planar_r3))
        assert adapted_frame_matrix(pol) == Matrix.eye(3)


class TestGotayForm:
    def test_planar_form_on_r3(self, planar_r3):
        pol = polarization_complement(planar_r3, null_distribution(planar_r3))
        result = gotay_form(pol, fiber_order=3)
        assert result.chart.coord_names == ("x1", "x2", "x3", "p3")
        assert result.to_text() == "dx1^dx2 + dx3^dp3"

    def test_planar_form_on_r4(self, planar_r4):
        pol = polarization_complement(planar_r4, null_distribution(planar_r4))
        assert gotay_form(pol, fiber_order=3).to_text() == "dx1^dx2 + dx3^dp3 + dx4^dp4"

    def test_symplectic_form_is_unchanged(self, symplectic_r2):
        pol = polarization_complement(symplectic_r2, null_distribution(symplectic_r2))
        assert gotay_form(pol, fiber_order=2) is symplectic_r2

    def test_closed_nondegenerate_and_restricts_to_omega(self, planar_r4):
        pol = polarization_complement(planar_r4, null_distribution(planar_r4))
        result = gotay_form(pol, fiber_order=1)
        assert exterior_d(result.form).is_zero
        assert result.form.matrix_at((0,) * 6).det() != 0
        base = result.form.poly_matrix(range(4))
        assert base == [[result.chart.constant(c) for c in row] for row in planar_r4.form.matrix_at((0,) * 4).tolist()]

    def test_negative_fiber_order(self, planar_r3):
        pol = polarization_complement(planar_r3, null_distribution(planar_r3))
        with pytest.raises(ValueError):
            gotay_form(pol, fiber_order=-1)


class TestStabilize:
    def test_zero_is_identity(self, planar_r3):
        pol = polarization_complement(planar_r3, null_distribution(planar_r3))
        thick, record = stabilize(pol, 0)
        assert thick is pol
        assert record.before == record.after == 1

    def test_planar_form_on_r3(self, planar_r3):
        pol = polarization_complement(planar_r3, null_distribution(planar_r3))
        thick, record = stabilize(pol, 2)
        assert thick.chart.dim == 5
        assert (record.before, record.after) == (1, 1)
        assert isinstance(thick, Polarization)
        assert thick.nullity == 3

    @pytest.mark.parametrize("k", [1, 2, 5])
    def test_record_is_read_off_the_result(self, planar_r3, k):
        pol = polarization_complement(planar_r3, null_distribution(planar_r3))
        thick, record = stabilize(pol, k)
        assert thick.virtual_dim == record.after == pol.virtual_dim == 1
        assert thick.g_rank == record.rank_after == 2 + k
        assert thick.omega.dim == record.dim_after == 3 + k
        assert len(thick.g_frame) == 2
        assert thick.thickening == k

    def test_repeated_stabilization_accumulates(self, planar_r3):
        pol = polarization_complement(planar_r3, null_distribution(planar_r3))
        once, _ = stabilize(pol, 1)
        twice, record = stabilize(once, 2)
        assert twice.thickening == 3
        assert (record.rank_before, record.rank_after) == (3, 5)
        assert twice.virtual_dim == 1

    def test_thickening_bounded_by_the_kernel(self, planar_r3):
        pol = polarization_complement(planar_r3, null_distribution(planar_r3))
        with pytest.raises(ValueError, match="Thickening"):
            Polarization(pol.omega, pol.f_frame, pol.g_frame, thickening=2)

    def test_symplectic_plane(self, symplectic_r2):
        pol = polarization_complement(symplectic_r2, null_distribution(symplectic_r2))
        thick, record = stabilize(pol, 5)
        assert (record.before, record.after) == (0, 0)
        assert record.dim_after == 7
        assert thick.virtual_dim == 0
