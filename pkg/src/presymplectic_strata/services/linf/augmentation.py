"""Curvature terms ``l_0^X``, Maurer-Cartan series and tangent complexes at zeros of ``l_0^X``."""

import logging
from dataclasses import dataclass
from itertools import combinations
from math import comb, factorial
from typing import Any

from pydantic import BaseModel
from sympy import Matrix, Rational

from presymplectic_strata.core.config import LOGGER_NAME, TangentComplexSettings
from presymplectic_strata.services.algebra.fields import MultiVector, schouten
from presymplectic_strata.services.algebra.maps import PolyMap
from presymplectic_strata.services.algebra.polynomials import evaluate, poly_to_text, to_rational
from presymplectic_strata.services.foliation.distributions import (
    FrameDistribution,
    form_pairing,
    frobenius_check,
)
from presymplectic_strata.services.geometry.stratify import FormField
from presymplectic_strata.services.linf.vdata import AbelianElement, LinfStructure, VData

logger = logging.getLogger(LOGGER_NAME)


@dataclass(frozen=True, eq=False)
class Augmentation:
    """``eta_X = X -| omega_ref`` on the F-frame: components ``eta_a = omega_ref(X, f_a)``."""

    components: tuple
    closed: bool
    obstruction: tuple[str, ...]
    element: AbelianElement | None = None

    @property
    def is_zero(self) -> bool:
        return not any(self.components)


def curved_augmentation(
    omega_ref: FormField,
    f_frame: FrameDistribution,
    x: MultiVector,
    vdata: VData | None = None,
) -> Augmentation:
    """Foliation 1-form ``l_0^X`` and the exact verdict ``d_F l_0^X = 0``.

    ``d eta(f_a, f_b) = f_a(eta_b) - f_b(eta_a) - eta([f_a, f_b])``. With ``vdata`` the form is
    also returned as an abelian element on the Gotay chart.
    """
    omega_ref.chart.require_same(f_frame.chart)
    x.chart.require_same(f_frame.chart)
    if not frobenius_check(f_frame):
        raise ValueError(f"{f_frame.to_text()} is not integrable")
    form = omega_ref.form
    fields = f_frame.fields
    components = tuple(form_pairing(form, x, f) for f in fields)

    obstruction = []
    names = f_frame.chart.coord_names
    for a, b in combinations(range(len(fields)), 2):
        value = fields[a].apply(components[b]) - fields[b].apply(components[a])
        bracket = schouten(fields[a], fields[b])
        if not bracket.is_zero:
            value -= form_pairing(form, x, bracket)
        if value:
            obstruction.append(f"d_F eta(f{a + 1}, f{b + 1}) = {poly_to_text(value, names)}")
    closed = not obstruction

    element = None
    if vdata is not None:
        lift = PolyMap(vdata.chart, f_frame.chart, vdata.chart.gens[: vdata.base_dim])
        element = vdata.element({(a,): lift.pull_scalar(c) for a, c in enumerate(components) if c}, 1)
    if not closed:
        logger.warning(f"l_0^X is not d_F-closed: {'; '.join(obstruction)}")
    logger.debug(f"l_0^X components {[poly_to_text(c, names) for c in components]}")
    return Augmentation(components, closed, tuple(obstruction), element)


class MCResult(BaseModel):
    value: str
    terms: list[str]
    coisotropic: bool
    accuracy: str | None


def mc_series(structure: LinfStructure, sigma: AbelianElement, max_arity: int = 4) -> MCResult:
    """``MC(sigma) = sum_{k <= K} l_k(sigma, ..., sigma) / k!`` for a foliation 1-form ``sigma``.

    ``sigma`` has shifted degree 0; the graph of ``sigma`` is coisotropic to the computed order
    exactly when the truncated sum vanishes.
    """
    vdata = structure.vdata
    if not sigma.is_zero and (sigma.degree != 1 or not vdata.is_abelian(sigma)):
        raise ValueError(f"Maurer-Cartan series needs a foliation 1-form, got {sigma.to_text()}")
    total = None
    terms = []
    for k in range(max_arity + 1):
        term = structure.bracket(*([sigma] * k)) * Rational(1, factorial(k))
        terms.append(term.to_text())
        total = term if total is None else total + term
    accuracy = None if total.accuracy is None else str(total.accuracy)
    result = MCResult(value=total.to_text(), terms=terms, coisotropic=total.is_zero, accuracy=accuracy)
    logger.debug(f"MC({sigma.to_text()}) = {result.value}")
    return result


class TangentComplexRecord(BaseModel):
    point: list[str]
    dim_y: int
    fiber_dim: int
    dimensions: list[int]
    ranks: list[int]
    cohomology: list[int]
    complex_euler: int
    chi_fiber: int
    chi_convention: str
    virtual_dim: int


def fiber_euler_characteristic(m: int, include_degree_zero: bool = False) -> int:
    """``sum_k (-1)^(k+1) C(m, k)`` over the stalk ``Lambda^k(R^m)``, ``k >= 1`` unless degree 0 is included."""
    start = 0 if include_degree_zero else 1
    return sum((-1) ** (k + 1) * comb(m, k) for k in range(start, m + 1))


def tangent_complex(
    structure: LinfStructure,
    eta: AbelianElement,
    point: tuple[Any, ...],
    settings: TangentComplexSettings | None = None,
) -> TangentComplexRecord:
    """Stalk model ``T_p Y -> Lambda^1 -> Lambda^2 -> ... -> Lambda^m`` at a zero ``p`` of ``l_0^X = eta``.

    The first map is the coordinate derivative of ``eta`` at ``p``; the others are ``l_1`` on
    constant forms evaluated at ``p``.
    """
    settings = settings or TangentComplexSettings()
    vdata = structure.vdata
    n, m = vdata.base_dim, vdata.fiber_dim
    p = tuple(to_rational(c) for c in point)
    if len(p) != n:
        raise ValueError(f"Point {point} does not lie on the {n}-dimensional base")
    at = p + (Rational(0),) * m
    gens = vdata.chart.gens

    values = [evaluate(eta.coefficient((n + a,)), at) for a in range(m)]
    if any(values):
        raise ValueError(f"{eta.to_text()} does not vanish at {p}")

    bases = [list(combinations(range(m), k)) for k in range(m + 1)]
    linear = Matrix.zeros(m, n)
    for a in range(m):
        for i in range(n):
            linear[a, i] = evaluate(eta.coefficient((n + a,)).diff(gens[i]), at)
    differentials = [linear]
    for k in range(1, m):
        rows, cols = bases[k + 1], bases[k]
        d = Matrix.zeros(len(rows), len(cols))
        for j, key in enumerate(cols):
            image = structure.bracket(vdata.element({key: 1}, k))
            for r, target in enumerate(rows):
                d[r, j] = evaluate(image.coefficient(tuple(n + t for t in target)), at)
        differentials.append(d)
    for first, second in zip(differentials, differentials[1:]):
        if not (second * first).is_zero_matrix:
            logger.warning("Tangent complex differentials do not square to zero at the point")

    dimensions = [n] + [len(bases[k]) for k in range(1, m + 1)]
    ranks = [d.rank() for d in differentials]
    cohomology = []
    for k, dim in enumerate(dimensions):
        outgoing = ranks[k] if k < len(ranks) else 0
        incoming = ranks[k - 1] if k >= 1 else 0
        cohomology.append(dim - outgoing - incoming)
    chi = fiber_euler_characteristic(m, settings.include_degree_zero)
    record = TangentComplexRecord(
        point=[str(c) for c in p],
        dim_y=n,
        fiber_dim=m,
        dimensions=dimensions,
        ranks=ranks,
        cohomology=cohomology,
        complex_euler=sum((-1) ** k * h for k, h in enumerate(cohomology)),
        chi_fiber=chi,
        chi_convention="degrees 0..m" if settings.include_degree_zero else "degrees 1..m",
        virtual_dim=n - chi,
    )
    logger.debug(f"Tangent complex at {p}: dims {dimensions}, ranks {ranks}, vir.dim {record.virtual_dim}")
    return record
