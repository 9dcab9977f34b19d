"""Differential forms and multivector fields with exact polynomial or jet coefficients.

A field of degree ``k`` maps strictly increasing index tuples ``(i1, ..., ik)`` to
coefficients in the chart's polynomial ring. Forms use the basis ``dx_i1^...^dx_ik``,
multivectors the basis ``d/dx_i1^...^d/dx_ik``. Constructors accept unsorted or repeated
index tuples and normalize them (sign of the sorting permutation, zero on repeats).

Jet fields carry a truncation ``order`` and a guaranteed ``accuracy``; every derivative
or bracket lowers the accuracy by one and binary operations take the componentwise minimum.
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, ClassVar

import numpy as np
from sympy import Matrix, Rational
from sympy.polys.rings import PolyElement

from presymplectic_strata.core.config import LOGGER_NAME
from presymplectic_strata.errors import ChartMismatchError, DegenerateFormError
from presymplectic_strata.services.algebra.polynomials import (
    Chart,
    JetOrder,
    PolyScalar,
    coerce_poly,
    constant_term,
    evaluate,
    evaluate_float,
    is_constant,
    join_signed,
    meet_orders,
    poly_to_text,
    total_degree,
    truncate,
)

logger = logging.getLogger(LOGGER_NAME)

Index = tuple[int, ...]


def sort_indices(indices: Sequence[int]) -> tuple[int, Index]:
    """Sign of the sorting permutation and the sorted tuple; sign 0 on a repeated index."""
    if len(set(indices)) != len(indices):
        return 0, ()
    sign = 1
    for a in range(len(indices)):
        for b in range(a + 1, len(indices)):
            if indices[a] > indices[b]:
                sign = -sign
    return sign, tuple(sorted(indices))


def _accumulate(terms: dict, key: Index, value: PolyElement) -> None:
    if value:
        terms[key] = terms[key] + value if key in terms else value


def _lowered(accuracy: JetOrder | None) -> JetOrder | None:
    return None if accuracy is None else accuracy.lowered()


@dataclass(frozen=True, eq=False)
class GradedField:
    chart: Chart
    degree: int
    coeffs: Mapping[Index, Any] = field(default_factory=dict)
    order: JetOrder | None = None
    accuracy: JetOrder | None = None

    basis_prefix: ClassVar[str] = ""

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError(f"Negative degree {self.degree}")
        dim = self.chart.dim
        cleaned: dict[Index, PolyElement] = {}
        for idx, value in self.coeffs.items():
            idx = tuple(idx)
            if len(idx) != self.degree:
                raise ValueError(f"Index {idx} does not match degree {self.degree}")
            if any(not 0 <= i < dim for i in idx):
                raise ValueError(f"Index {idx} out of range for dimension {dim}")
            sign, key = sort_indices(idx)
            if sign:
                _accumulate(cleaned, key, sign * coerce_poly(self.chart, value))
        if self.order is not None:
            cleaned = {k: truncate(c, self.order, self.chart) for k, c in cleaned.items()}
        cleaned = {k: cleaned[k] for k in sorted(cleaned) if cleaned[k]}
        object.__setattr__(self, "coeffs", MappingProxyType(cleaned))
        if self.accuracy is None and self.order is not None:
            object.__setattr__(self, "accuracy", self.order)

    @classmethod
    def zero(cls, chart: Chart, degree: int, order: JetOrder | None = None):
        return cls(chart, degree, {}, order)

    @classmethod
    def scalar(cls, chart: Chart, value: Any, order: JetOrder | None = None):
        return cls(chart, 0, {(): value}, order)

    def _like(self, coeffs: Mapping, degree: int | None = None, order=None, accuracy=None):
        return type(self)(
            self.chart,
            self.degree if degree is None else degree,
            coeffs,
            self.order if order is None else order,
            self.accuracy if accuracy is None else accuracy,
        )

    def _check_peer(self, other: "GradedField") -> None:
        if type(other) is not type(self):
            raise TypeError(f"Cannot combine {type(self).__name__} with {type(other).__name__}")
        self.chart.require_same(other.chart)

    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return (
            self.chart == other.chart
            and (self.degree == other.degree or not (self.coeffs or other.coeffs))
            and dict(self.coeffs) == dict(other.coeffs)
        )

    __hash__ = None

    def __add__(self, other: "GradedField"):
        self._check_peer(other)
        if other.degree != self.degree and other.coeffs and self.coeffs:
            raise ValueError(f"Cannot add degrees {self.degree} and {other.degree}")
        degree = self.degree if self.coeffs or not other.coeffs else other.degree
        terms = dict(self.coeffs)
        for k, c in other.coeffs.items():
            _accumulate(terms, k, c)
        return self._like(
            terms,
            degree,
            meet_orders(self.order, other.order),
            meet_orders(self.accuracy, other.accuracy),
        )

    def __neg__(self):
        return self._like({k: -c for k, c in self.coeffs.items()})

    def __sub__(self, other: "GradedField"):
        return self + (-other)

    def scale(self, factor: Any):
        f = coerce_poly(self.chart, factor)
        return self._like({k: f * c for k, c in self.coeffs.items()})

    def __mul__(self, factor: Any):
        if isinstance(factor, GradedField):
            return NotImplemented
        return self.scale(factor)

    __rmul__ = __mul__

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def is_constant(self) -> bool:
        return all(is_constant(c) for c in self.coeffs.values())

    @property
    def poly_degree(self) -> int:
        return max((total_degree(c) for c in self.coeffs.values()), default=-1)

    def coefficient(self, indices: Sequence[int]) -> PolyElement:
        sign, key = sort_indices(tuple(indices))
        if not sign:
            return self.chart.ring.zero
        return sign * self.coeffs.get(key, self.chart.ring.zero)

    def scalar_coefficient(self, indices: Sequence[int]) -> PolyScalar:
        return PolyScalar(self.chart, self.coefficient(indices))

    def map_coefficients(self, fn) -> "GradedField":
        return self._like({k: fn(c) for k, c in self.coeffs.items()})

    def truncated(self, order: JetOrder | int) -> "GradedField":
        order = order if isinstance(order, JetOrder) else JetOrder(order)
        return type(self)(self.chart, self.degree, self.coeffs, order, meet_orders(order, self.accuracy))

    def at(self, point: Sequence[Any]) -> dict[Index, Rational]:
        return {k: evaluate(c, point) for k, c in self.coeffs.items()}

    def basis_text(self, indices: Index) -> str:
        names = self.chart.coord_names
        return "^".join(f"{self.basis_prefix}{names[i]}" for i in indices)

    def to_text(self) -> str:
        names = self.chart.coord_names
        terms = []
        for idx, c in self.coeffs.items():
            basis = self.basis_text(idx)
            if not basis:
                terms.append(poly_to_text(c, names))
            elif c == 1:
                terms.append(basis)
            elif c == -1:
                terms.append(f"-{basis}")
            elif len(c) == 1:
                terms.append(f"{poly_to_text(c, names)}*{basis}")
            else:
                terms.append(f"({poly_to_text(c, names)})*{basis}")
        return join_signed(terms)

    def __str__(self) -> str:
        return self.to_text()

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.degree}, {self.to_text()!r})"


class DiffForm(GradedField):
    basis_prefix: ClassVar[str] = "d"

    @classmethod
    def differential(cls, chart: Chart, index: int) -> "DiffForm":
        return cls(chart, 1, {(index,): 1})

    @classmethod
    def from_matrix(cls, chart: Chart, matrix: Any, order: JetOrder | None = None) -> "DiffForm":
        """2-form ``sum_{i<j} M[i][j] dx_i^dx_j`` from a (skew) Gram matrix."""
        n = chart.dim
        rows = [[matrix[i, j] if hasattr(matrix, "shape") else matrix[i][j] for j in range(n)] for i in range(n)]
        return cls(chart, 2, {(i, j): rows[i][j] for i in range(n) for j in range(i + 1, n)}, order)

    def entry(self, i: int, j: int) -> PolyElement:
        """Gram entry ``w(d/dx_i, d/dx_j)`` of a 2-form."""
        if self.degree != 2:
            raise ValueError("Gram entries are defined for 2-forms only")
        return self.coefficient((i, j))

    def poly_matrix(self, indices: Sequence[int] | None = None) -> list[list[PolyElement]]:
        idx = range(self.chart.dim) if indices is None else indices
        return [[self.entry(i, j) for j in idx] for i in idx]

    def matrix_at(self, point: Sequence[Any]) -> Matrix:
        n = self.chart.dim
        return Matrix(n, n, lambda i, j: evaluate(self.entry(i, j), point))

    def matrix_at_float(self, point: Sequence[float]) -> np.ndarray:
        n = self.chart.dim
        m = np.zeros((n, n))
        for (i, j), c in self.coeffs.items():
            value = evaluate_float(c, point)
            m[i, j], m[j, i] = value, -value
        return m


class MultiVector(GradedField):
    basis_prefix: ClassVar[str] = "d/d"

    @property
    def shifted_degree(self) -> int:
        """Degree in the ``[1]``-shifted grading: a k-vector sits in degree k - 1."""
        return self.degree - 1

    @classmethod
    def coordinate_vector(cls, chart: Chart, index: int) -> "MultiVector":
        return cls(chart, 1, {(index,): 1})

    @classmethod
    def vector(cls, chart: Chart, components: Sequence[Any], order: JetOrder | None = None) -> "MultiVector":
        return cls(chart, 1, {(i,): c for i, c in enumerate(components)}, order)

    def components(self) -> list[PolyElement]:
        if self.degree != 1:
            raise ValueError("Components are defined for vector fields only")
        return [self.coefficient((i,)) for i in range(self.chart.dim)]

    def apply(self, f: Any) -> PolyElement:
        """Derivative ``v(f)`` of a scalar along a vector field."""
        f = coerce_poly(self.chart, f)
        gens = self.chart.gens
        result = self.chart.ring.zero
        for (i,), c in self.coeffs.items():
            result += c * f.diff(gens[i])
        return result


def exterior_d(a: DiffForm) -> DiffForm:
    gens = a.chart.gens
    terms: dict[Index, PolyElement] = {}
    for idx, c in a.coeffs.items():
        for k, g in enumerate(gens):
            sign, key = sort_indices((k,) + idx)
            if sign:
                _accumulate(terms, key, sign * c.diff(g))
    return DiffForm(a.chart, a.degree + 1, terms, a.order, _lowered(a.accuracy))


def wedge(a: GradedField, b: GradedField) -> GradedField:
    a._check_peer(b)
    terms: dict[Index, PolyElement] = {}
    for i, ca in a.coeffs.items():
        for j, cb in b.coeffs.items():
            sign, key = sort_indices(i + j)
            if sign:
                _accumulate(terms, key, sign * ca * cb)
    return type(a)(
        a.chart,
        a.degree + b.degree,
        terms,
        meet_orders(a.order, b.order),
        meet_orders(a.accuracy, b.accuracy),
    )


def interior(v: MultiVector, a: DiffForm) -> DiffForm:
    """Contraction of the first slot: ``v -| (dx_I) = sum_s (-1)^s v^{i_s} dx_{I - i_s}``."""
    if v.degree != 1:
        raise ValueError(f"Interior product needs a vector field, got degree {v.degree}")
    v.chart.require_same(a.chart)
    if a.degree == 0:
        raise ValueError("Interior product of a function is undefined")
    terms: dict[Index, PolyElement] = {}
    for idx, c in a.coeffs.items():
        for s, i in enumerate(idx):
            vi = v.coeffs.get((i,))
            if vi:
                _accumulate(terms, idx[:s] + idx[s + 1 :], (-1) ** s * vi * c)
    return DiffForm(
        a.chart,
        a.degree - 1,
        terms,
        meet_orders(a.order, v.order),
        meet_orders(a.accuracy, v.accuracy),
    )


def lie_derivative(v: MultiVector, a: DiffForm) -> DiffForm:
    """Cartan's formula ``L_v a = d(v -| a) + v -| da``."""
    if a.degree == 0:
        return interior(v, exterior_d(a))
    return exterior_d(interior(v, a)) + interior(v, exterior_d(a))


def _right_derivative(indices: Index, i: int) -> tuple[int, Index]:
    s = indices.index(i)
    return (-1) ** (len(indices) - 1 - s), indices[:s] + indices[s + 1 :]


def schouten(a: MultiVector, b: MultiVector) -> MultiVector:
    """Schouten-Nijenhuis bracket, normalized so that ``[v, f] = v(f)`` and ``[P, P] = 0`` for Poisson ``P``.

    With ``d/dx_i`` written as odd variables ``xi_i``:
    ``[A, B] = sum_i (A <- d/dxi_i)(d_i B) - (-1)^((a-1)(b-1)) (B <- d/dxi_i)(d_i A)``.
    """
    a._check_peer(b)
    if not isinstance(a, MultiVector):
        raise TypeError("Schouten bracket is defined on multivector fields")
    p, q = a.degree, b.degree
    degree = p + q - 1
    order = meet_orders(a.order, b.order)
    accuracy = _lowered(meet_orders(a.accuracy, b.accuracy))
    if degree < 0:
        return MultiVector(a.chart, 0, {}, order, accuracy)
    swap = (-1) ** ((p - 1) * (q - 1))
    gens = a.chart.gens
    terms: dict[Index, PolyElement] = {}
    for i, g in enumerate(gens):
        for I, ca in a.coeffs.items():
            if i not in I:
                continue
            s, rest = _right_derivative(I, i)
            for J, cb in b.coeffs.items():
                sign, key = sort_indices(rest + J)
                if sign:
                    _accumulate(terms, key, sign * s * ca * cb.diff(g))
        for J, cb in b.coeffs.items():
            if i not in J:
                continue
            s, rest = _right_derivative(J, i)
            for I, ca in a.coeffs.items():
                sign, key = sort_indices(rest + I)
                if sign:
                    _accumulate(terms, key, -swap * sign * s * cb * ca.diff(g))
    return MultiVector(a.chart, degree, terms, order, accuracy)


def _matmul(a: list, b: list, zero: PolyElement, trunc) -> list:
    rows, inner, cols = len(a), len(b), len(b[0]) if b else 0
    out = []
    for i in range(rows):
        row = []
        for j in range(cols):
            acc = zero
            for k in range(inner):
                if a[i][k] and b[k][j]:
                    acc += a[i][k] * b[k][j]
            row.append(trunc(acc))
        out.append(row)
    return out


def invert_two_form_jet(
    w: DiffForm,
    g_indices: Sequence[int],
    order: JetOrder | int | None = None,
    base_point: Sequence[Any] | None = None,
) -> MultiVector:
    """Bivector ``B`` on the ``G`` block with ``sum_j w(d_j, d_i) B^{jk} = delta_ik`` modulo the jet order.

    The block matrix ``A = W^T`` is split as ``A0 + N`` with ``A0`` its value at the origin;
    ``A^{-1} = sum_k (-A0^{-1} N)^k A0^{-1}`` terminates after the truncation degree since
    ``N`` vanishes at the origin. Components outside the block are zero.

    Jets are expanded about the origin. A non-constant block with ``base_point`` elsewhere
    raises ``ValueError``; translate the chart first.
    """
    if w.degree != 2:
        raise ValueError("invert_two_form_jet needs a 2-form")
    order = JetOrder(order) if isinstance(order, int) else order
    order = order if order is not None else w.order
    chart = w.chart
    block = tuple(sorted(g_indices))
    n = len(block)
    zero = chart.ring.zero

    a = [[w.entry(block[j], block[i]) for j in range(n)] for i in range(n)]
    if base_point is not None and any(base_point) and not all(is_constant(c) for row in a for c in row):
        point = ", ".join(str(c) for c in base_point)
        raise ValueError(f"Jet inversion is expanded about the origin, not ({point}); translate the chart first")
    a0 = Matrix(n, n, lambda i, j: constant_term(a[i][j]))
    if n == 0 or a0.det() == 0:
        names = ", ".join(chart.coord_names[i] for i in block)
        raise DegenerateFormError(f"Form is degenerate on the block ({names}) at the origin", block=block)
    a0_inv = a0.inv()
    inverse = [[chart.constant(a0_inv[i, j]) for j in range(n)] for i in range(n)]
    nilpotent = [[a[i][j] - chart.constant(a0[i, j]) for j in range(n)] for i in range(n)]

    if any(c for row in nilpotent for c in row):
        if order is None:
            raise ValueError("A jet order is required to invert a non-constant form")

        def trunc(p):
            return truncate(p, order, chart)

        step = _matmul(inverse, nilpotent, zero, trunc)
        step = [[-c for c in row] for row in step]
        term = inverse
        for _ in range(order.base + (order.fiber or 0) + 1):
            term = _matmul(step, term, zero, trunc)
            if not any(c for row in term for c in row):
                break
            inverse = [[x + y for x, y in zip(r1, r2)] for r1, r2 in zip(inverse, term)]

    coeffs = {(block[i], block[j]): inverse[i][j] for i in range(n) for j in range(i + 1, n)}
    logger.debug(f"Inverted {n}x{n} block of a 2-form to order {order}")
    return MultiVector(chart, 2, coeffs, order, meet_orders(w.accuracy, order))


def contraction_matrix(w: DiffForm, bivector: MultiVector, g_indices: Sequence[int]) -> list[list[PolyElement]]:
    """``C[i][k] = sum_j w(d_j, d_i) B^{jk}`` on the block; identity for an inverse."""
    block = tuple(sorted(g_indices))
    zero = w.chart.ring.zero
    return [
        [
            sum((w.entry(j, i) * bivector.coefficient((j, k)) for j in block if j != k), zero)
            for k in block
        ]
        for i in block
    ]


def same_chart(*fields: GradedField) -> Chart:
    chart = fields[0].chart
    for f in fields[1:]:
        if f.chart != chart:
            raise ChartMismatchError(f"Chart mismatch: {chart.coord_names} vs {f.chart.coord_names}")
    return chart
