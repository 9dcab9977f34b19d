from itertools import combinations

import pytest

from presymplectic_strata.services.algebra.fields import DiffForm, MultiVector
from presymplectic_strata.services.algebra.polynomials import PolyScalar
from presymplectic_strata.utils.rng import random_rational


def _random_poly(chart, rng, max_degree=3, terms=3):
    monomials = {}
    for _ in range(terms):
        monom = [0] * chart.dim
        for _ in range(int(rng.integers(0, max_degree + 1))):
            monom[int(rng.integers(0, chart.dim))] += 1
        monomials[tuple(monom)] = random_rational(rng, bound=3, denominator=3)
    return PolyScalar.from_terms(chart, monomials).poly


def _random_field(cls, chart, degree, rng, max_degree=3, terms=3):
    basis = list(combinations(range(chart.dim), degree))
    if not basis:
        return cls.zero(chart, degree)
    picks = rng.choice(len(basis), size=min(terms, len(basis)), replace=False)
    return cls(
        chart,
        degree,
        {basis[int(i)]: _random_poly(chart, rng, max_degree) for i in picks},
    )


@pytest.fixture
def random_poly():
    return _random_poly


@pytest.fixture
def random_form():
    def factory(chart, degree, rng, max_degree=3, terms=3):
        return _random_field(DiffForm, chart, degree, rng, max_degree, terms)

    return factory


@pytest.fixture
def random_multivector():
    def factory(chart, degree, rng, max_degree=2, terms=3):
        return _random_field(MultiVector, chart, degree, rng, max_degree, terms)

    return factory
