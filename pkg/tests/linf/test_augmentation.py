import pytest

from presymplectic_strata.core.config import TangentComplexSettings
from presymplectic_strata.services.algebra.fields import DiffForm, MultiVector
from presymplectic_strata.services.foliation.distributions import null_distribution
from presymplectic_strata.services.geometry.stratify import FormField
from presymplectic_strata.services.linf.augmentation import (
    curved_augmentation,
    fiber_euler_characteristic,
    mc_series,
    tangent_complex,
)
from presymplectic_strata.services.linf.vdata import LinfStructure
from presymplectic_strata.utils.rng import random_rational


@pytest.fixture
def ambient_r4(r4):
    """dx1^dx3: an ambient form that does not vanish on the null foliation of dx1^dx2."""
    return FormField(DiffForm(r4, 2, {(0, 2): 1}))


class TestCurvedAugmentation:
    def test_own_form_gives_zero(self, planar_r4, r4, rng):
        frame = null_distribution(planar_r4)
        for _ in range(20):
            x = MultiVector.vector(r4, [random_rational(rng) for _ in range(4)])
            result = curved_augmentation(planar_r4, frame, x)
            assert result.is_zero
            assert result.closed

    def test_ambient_form_on_r3(self, planar_r3, r3):
        ambient = FormField(DiffForm(r3, 2, {(0, 2): 1}))
        result = curved_augmentation(ambient, null_distribution(planar_r3), MultiVector.coordinate_vector(r3, 0))
        assert result.components == (1,)
        assert result.closed

    def test_ambient_form_not_closed(self, planar_r4, ambient_r4, r4):
        x4 = r4.gens[3]
        result = curved_augmentation(ambient_r4, null_distribution(planar_r4), MultiVector.vector(r4, [x4, 0, 0, 0]))
        assert not result.closed
        assert result.obstruction == ("d_F eta(f1, f2) = -1",)

    def test_ambient_form_closed(self, planar_r4, ambient_r4, r4):
        x3 = r4.gens[2]
        result = curved_augmentation(ambient_r4, null_distribution(planar_r4), MultiVector.vector(r4, [x3, 0, 0, 0]))
        assert result.closed
        assert result.components == (x3, 0)

    def test_zero_field(self, ambient_r4, planar_r4, r4):
        result = curved_augmentation(ambient_r4, null_distribution(planar_r4), MultiVector.zero(r4, 1))
        assert result.is_zero

    def test_element_on_gotay_chart(self, planar_r4, ambient_r4, r4, flat_r4):
        x4 = r4.gens[3]
        result = curved_augmentation(
            ambient_r4, null_distribution(planar_r4), MultiVector.vector(r4, [x4, 0, 0, 0]), flat_r4
        )
        assert result.element.to_text() == "x4*d/dp3"


class TestMCSeries:
    def test_zero_is_coisotropic(self, flat_r4_structure, flat_r4):
        result = mc_series(flat_r4_structure, flat_r4.element({}, 1))
        assert result.coisotropic
        assert result.value == "0"

    def test_closed_form_is_coisotropic(self, flat_r4_structure, flat_r4):
        x3 = flat_r4.chart.gens[2]
        assert mc_series(flat_r4_structure, flat_r4.element({(0,): x3})).coisotropic

    def test_non_closed_form(self, flat_r4_structure, flat_r4):
        x4 = flat_r4.chart.gens[3]
        result = mc_series(flat_r4_structure, flat_r4.element({(0,): x4}))
        assert not result.coisotropic
        assert result.value == "-d/dp3^d/dp4"
        assert result.terms[1] == "-d/dp3^d/dp4"

    def test_quadratic_term(self, flat_r4_structure, flat_r4):
        x1, x2 = flat_r4.chart.gens[:2]
        sigma = flat_r4.element({(0,): x1, (1,): x2})
        result = mc_series(flat_r4_structure, sigma)
        assert result.terms[1] == "0"
        assert result.value == "-d/dp3^d/dp4"

    def test_one_dimensional_leaves(self, flat_r3_structure, flat_r3):
        x3 = flat_r3.chart.gens[2]
        assert mc_series(flat_r3_structure, flat_r3.element({(0,): x3 * x3})).coisotropic

    def test_rejects_functions(self, flat_r4_structure, flat_r4):
        with pytest.raises(ValueError):
            mc_series(flat_r4_structure, flat_r4.coordinate_function(0))


class TestTangentComplex:
    def test_r3_model_with_zero_curvature(self, flat_r3_structure, flat_r3):
        record = tangent_complex(flat_r3_structure, flat_r3.element({}, 1), (0, 0, 0))
        assert record.dimensions == [3, 1]
        assert record.cohomology == [3, 1]
        assert record.chi_fiber == 1
        assert record.virtual_dim == 2
        assert record.chi_convention == "degrees 1..m"

    def test_degree_zero_convention(self, flat_r3_structure, flat_r3):
        settings = TangentComplexSettings(include_degree_zero=True)
        record = tangent_complex(flat_r3_structure, flat_r3.element({}, 1), (0, 0, 0), settings)
        assert record.chi_fiber == 0
        assert record.virtual_dim == 3

    def test_augmented_r4_model(self, planar_r4, ambient_r4, r4, flat_r4):
        x1 = r4.gens[0]
        eta = curved_augmentation(
            ambient_r4, null_distribution(planar_r4), MultiVector.vector(r4, [x1, 0, 0, 0]), flat_r4
        ).element
        structure = LinfStructure(flat_r4, curvature=eta)
        record = tangent_complex(structure, eta, (0, 1, 2, 3))
        assert record.dimensions == [4, 2, 1]
        assert record.ranks == [1, 0]
        assert record.cohomology == [3, 1, 1]
        assert record.virtual_dim == 3

    def test_point_must_be_a_zero(self, planar_r4, ambient_r4, r4, flat_r4):
        x1 = r4.gens[0]
        eta = curved_augmentation(
            ambient_r4, null_distribution(planar_r4), MultiVector.vector(r4, [x1, 0, 0, 0]), flat_r4
        ).element
        with pytest.raises(ValueError):
            tangent_complex(LinfStructure(flat_r4), eta, (1, 0, 0, 0))

    def test_symplectic_case(self, symplectic_plane):
        record = tangent_complex(LinfStructure(symplectic_plane), symplectic_plane.element({}, 1), (0, 0))
        assert record.virtual_dim == 2

    def test_fiber_euler_characteristic(self):
        assert [fiber_euler_characteristic(m) for m in range(4)] == [0, 1, 1, 1]
        assert fiber_euler_characteristic(2, include_degree_zero=True) == 0
