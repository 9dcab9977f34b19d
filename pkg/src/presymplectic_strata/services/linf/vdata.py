"""V-data on the Gotay chart and the derived-bracket L-infinity[1] structure.

Elements of the abelian part are vertical multivector fields ``sum_J c_J(x) d/dp_J`` on the
split chart ``(x, p)``; ``d/dp_a`` stands for the foliation 1-form dual to the ``a``-th
F-field, so a fiber ``k``-vector is a foliation ``k``-form of shifted degree ``k - 1``.
The projection restricts to the zero section and keeps the vertical part.
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from itertools import combinations
from threading import Lock
from typing import Any

import numpy as np
from sympy import Matrix, Rational

from presymplectic_strata.core.config import LOGGER_NAME
from presymplectic_strata.errors import AccuracyExhaustedError, NotPoissonError
from presymplectic_strata.services.algebra.fields import MultiVector, invert_two_form_jet, schouten
from presymplectic_strata.services.algebra.maps import PolyMap
from presymplectic_strata.services.algebra.polynomials import Chart, JetOrder, coerce_poly
from presymplectic_strata.services.foliation.distributions import Polarization
from presymplectic_strata.services.geometry.stratify import FormField
from presymplectic_strata.utils.rng import random_rational

logger = logging.getLogger(LOGGER_NAME)

AbelianElement = MultiVector


def settle(v: MultiVector) -> MultiVector:
    """Drop everything beyond the guaranteed accuracy."""
    if v.accuracy is None:
        return v
    if v.accuracy.exhausted:
        raise AccuracyExhaustedError(
            f"No accuracy left for {v.to_text()}", requested=0, available=str(v.accuracy)
        )
    return v.truncated(v.accuracy)


@dataclass(frozen=True, eq=False)
class NormalSplitting:
    """Block maps of the split chart: ``R`` collapses the fibers, ``sigma`` is the zero section."""

    chart: Chart
    base: Chart

    @property
    def base_dim(self) -> int:
        return self.base.dim

    @property
    def fiber_dim(self) -> int:
        return self.chart.dim - self.base.dim

    @property
    def retraction(self) -> PolyMap:
        n = self.base_dim
        zero = self.chart.ring.zero
        return PolyMap(self.chart, self.chart, tuple(g if i < n else zero for i, g in enumerate(self.chart.gens)))

    @property
    def section(self) -> PolyMap:
        return PolyMap(self.base, self.chart, tuple(self.base.gens) + (self.base.ring.zero,) * self.fiber_dim)

    def tangent_part(self, v: MultiVector) -> MultiVector:
        """Components along ``T sigma`` on the zero section."""
        return self._block(v, range(self.base_dim))

    def normal_part(self, v: MultiVector) -> MultiVector:
        """Components along ``N sigma`` (the fibers) on the zero section."""
        return self._block(v, range(self.base_dim, self.chart.dim))

    def _block(self, v: MultiVector, indices) -> MultiVector:
        keep = set(indices)
        r = self.retraction
        return MultiVector(
            self.chart,
            v.degree,
            {idx: r.pull_scalar(c) for idx, c in v.coeffs.items() if set(idx) <= keep},
            v.order,
            v.accuracy,
        )


def normal_splitting(chart: Chart, base: Chart) -> NormalSplitting:
    if chart.coord_names[: base.dim] != base.coord_names:
        raise ValueError(f"{base.coord_names} is not the base of {chart.coord_names}")
    return NormalSplitting(chart, base)


@dataclass(frozen=True, eq=False)
class VData:
    """Gotay chart, Poisson bivector ``P`` of the Gotay form and the projection onto the abelian part.

    ``sign`` is the overall sign of the derived brackets fixed by ``l_1 = d_F`` on functions.
    """

    gotay: FormField
    polarization: Polarization
    poisson: MultiVector
    orders: JetOrder
    splitting: NormalSplitting
    sign: int = 1

    @property
    def chart(self) -> Chart:
        return self.gotay.chart

    @property
    def base_dim(self) -> int:
        return self.splitting.base_dim

    @property
    def fiber_dim(self) -> int:
        return self.splitting.fiber_dim

    @property
    def f_matrix(self) -> Matrix:
        return self.polarization.f_frame.matrix_at(self.polarization.base_point)

    def project(self, h: MultiVector) -> AbelianElement:
        """``pi``: restriction to ``p = 0`` followed by the vertical part."""
        h.chart.require_same(self.chart)
        n = self.base_dim
        ring = self.chart.ring
        coeffs = {}
        for idx, c in h.coeffs.items():
            if all(i >= n for i in idx):
                coeffs[idx] = ring.from_dict({m: a for m, a in c.items() if not any(m[n:])})
        return MultiVector(self.chart, h.degree, coeffs, h.order, h.accuracy)

    def is_abelian(self, a: MultiVector) -> bool:
        n = self.base_dim
        return all(
            all(i >= n for i in idx) and not any(any(m[n:]) for m in c.keys()) for idx, c in a.coeffs.items()
        )

    def element(self, coeffs: Mapping[tuple[int, ...], Any], form_degree: int | None = None) -> AbelianElement:
        """Abelian element from ``{(a, b, ...): c(x)}`` with ``a, b`` counted among the fibers."""
        n = self.base_dim
        if form_degree is None:
            form_degree = len(next(iter(coeffs))) if coeffs else 0
        terms = {tuple(n + a for a in key): coerce_poly(self.chart, c) for key, c in coeffs.items()}
        element = MultiVector(self.chart, form_degree, terms)
        if not self.is_abelian(element):
            raise ValueError(f"{element.to_text()} depends on the fiber coordinates")
        return element

    def function(self, value: Any) -> AbelianElement:
        return MultiVector.scalar(self.chart, coerce_poly(self.chart, value))

    def coordinate_function(self, index: int) -> AbelianElement:
        return self.function(self.chart.gens[index])

    def foliation_differential(self, a: AbelianElement) -> AbelianElement:
        """``d_F`` for the constant F-frame: ``sum_a f_a(c_J) d/dp_a ^ d/dp_J``."""
        n, m = self.base_dim, self.fiber_dim
        gens = self.chart.gens
        frame = self.f_matrix
        terms: dict[tuple[int, ...], Any] = {}
        for idx, c in a.coeffs.items():
            for b in range(m):
                derivative = self.chart.ring.zero
                for i in range(n):
                    if frame[i, b] != 0:
                        derivative += self.chart.constant(frame[i, b]) * c.diff(gens[i])
                if derivative:
                    terms[(n + b,) + idx] = derivative
        return MultiVector(self.chart, a.degree + 1, terms, a.order, a.accuracy)

    def random_element(
        self, rng: np.random.Generator, form_degree: int | None = None, poly_degree: int = 2
    ) -> AbelianElement:
        """Random abelian element with small rational coefficients of degree ``<= poly_degree``."""
        m = self.fiber_dim
        k = int(rng.integers(0, m + 1)) if form_degree is None else form_degree
        n = self.base_dim
        gens = self.chart.gens
        terms = {}
        for key in _subsets(m, k):
            c = self.chart.ring.zero
            for _ in range(3):
                monomial = self.chart.ring.one
                for _ in range(int(rng.integers(0, poly_degree + 1))):
                    monomial *= gens[int(rng.integers(0, n))]
                c += self.chart.constant(random_rational(rng, bound=3, denominator=2)) * monomial
            terms[key] = c
        return self.element(terms, k)


def _subsets(m: int, k: int) -> list[tuple[int, ...]]:
    return list(combinations(range(m), k))


def derived_bracket(
    vdata: VData, args: Sequence[AbelianElement], generator: MultiVector | None = None
) -> AbelianElement:
    """``l_k(a_1, ..., a_k) = pi[...[[P, a_1], a_2], ..., a_k]``; ``l_0 = pi(P)``.

    ``generator`` replaces the signed ``P``. Each nested bracket spends one order of accuracy.
    """
    result = vdata.sign * vdata.poisson if generator is None else generator
    for a in args:
        result = schouten(result, a)
        if result.accuracy is not None and result.accuracy.exhausted:
            raise AccuracyExhaustedError(
                f"Bracket of arity {len(args)} exceeds the jet orders {vdata.orders}",
                requested=len(args),
                available=str(vdata.poisson.accuracy),
            )
    return settle(vdata.project(result))


def _sign_self_test(vdata: VData) -> int:
    """``+1`` or ``-1`` so that ``l_1(x_i) = d_F x_i`` on a coordinate with ``d_F x_i != 0``."""
    frame = vdata.f_matrix
    for i in range(vdata.base_dim):
        if any(frame[i, a] != 0 for a in range(vdata.fiber_dim)):
            x = vdata.coordinate_function(i)
            raw = settle(vdata.project(schouten(vdata.poisson, x)))
            expected = vdata.foliation_differential(x)
            if raw == expected:
                return 1
            if raw == -expected:
                return -1
            raise ValueError(
                f"Sign self-test failed: pi[P, {x.to_text()}] = {raw.to_text()}, d_F = {expected.to_text()}"
            )
    return 1


def build_vdata(
    gotay: FormField, polarization: Polarization, orders: JetOrder | tuple[int, int] = JetOrder(4, 3)
) -> VData:
    """Invert the Gotay form to the Poisson bivector ``P`` and certify ``[P, P] = 0``.

    Constant Gotay forms give an exact ``P``; otherwise ``P`` is a jet of the given orders.
    """
    orders = orders if isinstance(orders, JetOrder) else JetOrder(*orders)
    chart = gotay.chart
    base = polarization.chart
    splitting = normal_splitting(chart, base)
    if splitting.fiber_dim != polarization.nullity:
        raise ValueError(
            f"Gotay chart has {splitting.fiber_dim} fiber coordinates, polarization nullity is {polarization.nullity}"
        )
    everything = range(chart.dim)
    zero_section = tuple(polarization.base_point) + (0,) * splitting.fiber_dim
    if gotay.form.is_constant and gotay.form.accuracy is None:
        poisson = invert_two_form_jet(gotay.form, everything, base_point=zero_section)
    else:
        poisson = invert_two_form_jet(gotay.form, everything, orders, base_point=zero_section)

    square = schouten(poisson, poisson)
    if square.accuracy is not None and square.accuracy.exhausted:
        raise AccuracyExhaustedError(
            f"Orders {orders} cannot certify [P, P] = 0", requested=1, available=str(orders)
        )
    residual = settle(square)
    if not residual.is_zero:
        raise NotPoissonError(f"[P, P] = {residual.to_text()} does not vanish to order {square.accuracy}")

    vdata = VData(gotay, polarization, poisson, orders, splitting)
    for a in range(vdata.fiber_dim):
        unit = vdata.element({(a,): 1})
        if vdata.project(unit) != unit:
            raise AssertionError("pi o i is not the identity on the abelian part")
    sign = _sign_self_test(vdata)
    logger.debug(f"V-data on {chart.coord_names}: P = {poisson.to_text()}, bracket sign {sign:+d}")
    return VData(gotay, polarization, poisson, orders, splitting, sign)


@dataclass(eq=False)
class LinfStructure:
    """Memoized derived brackets of a V-data, optionally curved by an extra ``l_0`` term."""

    vdata: VData
    curvature: AbelianElement | None = None
    _memo: dict = field(default_factory=dict, init=False, repr=False)
    _lock: Lock = field(default_factory=Lock, init=False, repr=False)

    @property
    def chart(self) -> Chart:
        return self.vdata.chart

    @property
    def strict_candidate(self) -> bool:
        return self.curvature is None or self.curvature.is_zero

    def bracket(self, *args: AbelianElement) -> AbelianElement:
        key = tuple((a.degree, a.to_text()) for a in args)
        with self._lock:
            if key in self._memo:
                return self._memo[key]
        value = derived_bracket(self.vdata, args)
        if not args and self.curvature is not None:
            value = value + self.curvature
        with self._lock:
            self._memo[key] = value
        return value

    def jacobiator(self, *args: AbelianElement) -> AbelianElement:
        """Derived bracket of ``1/2 [P, P]``."""
        p = self.vdata.poisson
        return derived_bracket(self.vdata, args, generator=schouten(p, p) * Rational(1, 2))
