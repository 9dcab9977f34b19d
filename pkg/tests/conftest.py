import numpy as np
import pytest

from presymplectic_strata.services.algebra.fields import DiffForm
from presymplectic_strata.services.algebra.polynomials import Chart
from presymplectic_strata.services.foliation.distributions import (
    gotay_form,
    null_distribution,
    polarization_complement,
)
from presymplectic_strata.services.geometry.stratify import FormField
from presymplectic_strata.services.linf.vdata import build_vdata


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def r3():
    return Chart(("x1", "x2", "x3"))


@pytest.fixture
def r4():
    return Chart(("x1", "x2", "x3", "x4"))


@pytest.fixture
def planar_r3(r3):
    """dx1^dx2 on R^3."""
    return FormField(DiffForm(r3, 2, {(0, 1): 1}))


@pytest.fixture
def planar_r4(r4):
    """dx1^dx2 on R^4."""
    return FormField(DiffForm(r4, 2, {(0, 1): 1}))


@pytest.fixture
def model_form(r4):
    """x1*dx1^dx2 + dx3^dx4: symplectic off the hyperplane x1 = 0, nullity 2 on it."""
    x1 = r4.gens[0]
    return FormField(DiffForm(r4, 2, {(0, 1): x1, (2, 3): 1}))


@pytest.fixture
def unit_box():
    return ((-1, 1),) * 4


@pytest.fixture
def make_vdata():
    def build(omega: FormField, orders=(4, 3)):
        pol = polarization_complement(omega, null_distribution(omega))
        return build_vdata(gotay_form(pol, fiber_order=orders[1]), pol, orders)

    return build


@pytest.fixture
def flat_r3(make_vdata, planar_r3):
    return make_vdata(planar_r3)


@pytest.fixture
def flat_r4(make_vdata, planar_r4):
    return make_vdata(planar_r4)
