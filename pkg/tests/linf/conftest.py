import pytest

from presymplectic_strata.services.algebra.fields import DiffForm
from presymplectic_strata.services.algebra.polynomials import Chart
from presymplectic_strata.services.geometry.stratify import FormField
from presymplectic_strata.services.linf.vdata import LinfStructure


@pytest.fixture
def curved_r3_form(r3):
    x1, x2, _ = r3.gens
    return FormField(DiffForm(r3, 2, {(0, 1): 1 + x1 * x2}))


@pytest.fixture
def curved_r3(make_vdata, curved_r3_form):
    return make_vdata(curved_r3_form)


@pytest.fixture
def symplectic_plane(make_vdata):
    return make_vdata(FormField(DiffForm(Chart(("x1", "x2")), 2, {(0, 1): 1})))


@pytest.fixture
def flat_r3_structure(flat_r3):
    return LinfStructure(flat_r3)


@pytest.fixture
def flat_r4_structure(flat_r4):
    return LinfStructure(flat_r4)
