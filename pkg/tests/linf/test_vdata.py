import dataclasses

import pytest

from presymplectic_strata.errors import AccuracyExhaustedError, NotPoissonError
from presymplectic_strata.services.algebra.fields import MultiVector
from presymplectic_strata.services.algebra.polynomials import Chart, JetOrder
from presymplectic_strata.services.foliation.distributions import gotay_form, null_distribution, polarization_complement
from presymplectic_strata.services.linf.vdata import LinfStructure, build_vdata, derived_bracket, normal_splitting


class TestBuildVData:
    def test_flat_r3_poisson_bivector(self, flat_r3):
        assert flat_r3.chart.coord_names == ("x1", "x2", "x3", "p3")
        assert flat_r3.poisson.to_text() == "d/dx1^d/dx2 + d/dx3^d/dp3"
        assert flat_r3.poisson.accuracy is None
        assert (flat_r3.base_dim, flat_r3.fiber_dim) == (3, 1)

    def test_sign_makes_l1_the_foliation_differential(self, flat_r3, flat_r4):
        assert flat_r3.sign == -1
        assert flat_r4.sign == -1

    def test_curved_poisson_is_a_jet(self, curved_r3):
        x1, x2 = curved_r3.chart.gens[:2]
        assert curved_r3.poisson.accuracy == JetOrder(4, 3)
        assert curved_r3.poisson.coefficient((0, 1)) == 1 - x1 * x2 + x1**2 * x2**2
        assert curved_r3.poisson.coefficient((2, 3)) == 1

    def test_orders_too_small_to_certify(self, make_vdata, curved_r3_form):
        with pytest.raises(AccuracyExhaustedError):
            make_vdata(curved_r3_form, orders=(0, 1))

    def test_symplectic_case_has_no_fibers(self, symplectic_plane):
        assert symplectic_plane.fiber_dim == 0
        assert symplectic_plane.sign == 1
        structure = LinfStructure(symplectic_plane)
        assert structure.bracket().is_zero
        assert structure.bracket(symplectic_plane.coordinate_function(0)).is_zero

    def test_flat_form_away_from_origin(self, planar_r3):
        pol = polarization_complement(planar_r3, null_distribution(planar_r3, base_point=(1, 2, 3)))
        vdata = build_vdata(gotay_form(pol, fiber_order=3), pol)
        assert vdata.poisson.to_text() == "d/dx1^d/dx2 + d/dx3^d/dp3"

    def test_curved_form_away_from_origin(self, curved_r3_form):
        pol = polarization_complement(curved_r3_form, null_distribution(curved_r3_form, base_point=(1, 1, 0)))
        with pytest.raises(ValueError, match="about the origin"):
            build_vdata(gotay_form(pol, fiber_order=3), pol)

    def test_non_poisson_bivector_is_rejected(self, flat_r3, mocker):
        x2 = flat_r3.chart.gens[1]
        broken = flat_r3.poisson + MultiVector(flat_r3.chart, 2, {(1, 3): x2})
        mocker.patch("presymplectic_strata.services.linf.vdata.invert_two_form_jet", return_value=broken)
        with pytest.raises(NotPoissonError):
            build_vdata(flat_r3.gotay, flat_r3.polarization)


class TestElements:
    def test_projection_keeps_vertical_part_on_zero_section(self, flat_r3):
        x1, x2, x3, p3 = flat_r3.chart.gens
        h = MultiVector(flat_r3.chart, 1, {(0,): x1, (3,): x3 + p3 * x1})
        assert flat_r3.project(h).to_text() == "x3*d/dp3"

    def test_projection_is_identity_on_abelian_elements(self, flat_r4, rng):
        for _ in range(5):
            a = flat_r4.random_element(rng)
            assert flat_r4.is_abelian(a)
            assert flat_r4.project(a) == a

    def test_fiber_dependence_is_rejected(self, flat_r3):
        p3 = flat_r3.chart.gens[3]
        with pytest.raises(ValueError):
            flat_r3.element({(0,): p3})

    def test_foliation_differential(self, flat_r4):
        x3, x4 = flat_r4.chart.gens[2:4]
        assert flat_r4.foliation_differential(flat_r4.coordinate_function(2)).to_text() == "d/dp3"
        sigma = flat_r4.element({(0,): x4})
        assert flat_r4.foliation_differential(sigma).to_text() == "-d/dp3^d/dp4"
        assert flat_r4.foliation_differential(flat_r4.element({(0,): x3})).is_zero


class TestNormalSplitting:
    def test_block_maps(self, flat_r3):
        splitting = flat_r3.splitting
        x1, x2, x3, p3 = flat_r3.chart.gens
        assert splitting.retraction((1, 2, 3, 4)) == (1, 2, 3, 0)
        assert splitting.section((1, 2, 3)) == (1, 2, 3, 0)
        v = MultiVector.vector(flat_r3.chart, [p3, 0, 1, x1 + p3])
        assert splitting.tangent_part(v).to_text() == "d/dx3"
        assert splitting.normal_part(v).to_text() == "x1*d/dp3"

    def test_built_from_base_chart(self, flat_r3):
        splitting = normal_splitting(flat_r3.chart, Chart(("x1", "x2", "x3")))
        assert (splitting.base_dim, splitting.fiber_dim) == (3, 1)
        assert splitting.retraction == flat_r3.splitting.retraction

    def test_base_must_lead_the_chart(self, flat_r3):
        with pytest.raises(ValueError, match="is not the base"):
            normal_splitting(flat_r3.chart, Chart(("x2", "x1", "x3")))


class TestDerivedBracket:
    def test_curvature_vanishes(self, flat_r3):
        assert derived_bracket(flat_r3, []).is_zero

    def test_l1_of_coordinate(self, flat_r3):
        assert derived_bracket(flat_r3, [flat_r3.coordinate_function(2)]).to_text() == "d/dp3"
        assert derived_bracket(flat_r3, [flat_r3.coordinate_function(0)]).is_zero

    def test_l2_of_constants_vanishes(self, flat_r3):
        args = [flat_r3.function(3), flat_r3.element({(0,): 2})]
        assert derived_bracket(flat_r3, args).is_zero

    def test_l2_on_transverse_coordinates(self, flat_r3_structure, flat_r3):
        x1, x2 = flat_r3.coordinate_function(0), flat_r3.coordinate_function(1)
        assert flat_r3_structure.bracket(x1, x2).coefficient(()) == 1
        # functions have odd shifted degree
        assert flat_r3_structure.bracket(x2, x1).coefficient(()) == -1

    def test_accuracy_is_spent_per_argument(self, curved_r3):
        x1 = curved_r3.coordinate_function(0)
        derived_bracket(curved_r3, [x1] * 3)
        with pytest.raises(AccuracyExhaustedError):
            derived_bracket(curved_r3, [x1] * 4)

    def test_structure_memoizes(self, flat_r3_structure, flat_r3):
        x3 = flat_r3.coordinate_function(2)
        assert flat_r3_structure.bracket(x3) is flat_r3_structure.bracket(x3)


class TestSabotagedStructure:
    def test_replacing_poisson_skips_certification(self, flat_r3):
        x2 = flat_r3.chart.gens[1]
        sabotaged = dataclasses.replace(
            flat_r3, poisson=flat_r3.poisson + MultiVector(flat_r3.chart, 2, {(1, 3): x2})
        )
        assert sabotaged.sign == flat_r3.sign
        assert derived_bracket(sabotaged, [sabotaged.coordinate_function(1)]).to_text() == "x2*d/dp3"
