import pytest

from presymplectic_strata.services.algebra.fields import DiffForm
from presymplectic_strata.services.algebra.polynomials import Chart
from presymplectic_strata.services.geometry.stratify import FormField


@pytest.fixture
def slice_chart():
    return Chart(("x2", "x3", "x4"))


@pytest.fixture
def plane_chart():
    return Chart(("x3", "x4"))


@pytest.fixture
def flat_triple(make_vdata, r4, slice_chart, plane_chart):
    """dx3^dx4 on R^4, on the slice x1 = 0 and on the plane x1 = x2 = 0."""
    forms = [FormField(DiffForm(chart, 2, {(chart.index("x3"), chart.index("x4")): 1})) for chart in (plane_chart, slice_chart, r4)]
    return tuple(make_vdata(form) for form in forms)
