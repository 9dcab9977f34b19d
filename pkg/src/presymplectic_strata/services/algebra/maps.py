"""Polynomial maps between charts, pullback of forms and linear pushforward of multivectors."""

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

from sympy import Matrix, Rational

from presymplectic_strata.errors import ChartMismatchError
from presymplectic_strata.services.algebra.fields import (
    DiffForm,
    MultiVector,
    sort_indices,
    wedge,
)
from presymplectic_strata.services.algebra.polynomials import (
    Chart,
    coerce_poly,
    evaluate,
    is_constant,
    substitute,
)


@dataclass(frozen=True, eq=False)
class PolyMap:
    """``phi: source -> target`` given by one source polynomial per target coordinate."""

    source: Chart
    target: Chart
    components: tuple

    def __post_init__(self):
        comps = tuple(coerce_poly(self.source, c) for c in self.components)
        if len(comps) != self.target.dim:
            raise ValueError(
                f"Map needs {self.target.dim} components, got {len(comps)}"
            )
        object.__setattr__(self, "components", comps)

    @classmethod
    def identity(cls, chart: Chart) -> "PolyMap":
        return cls(chart, chart, chart.gens)

    @classmethod
    def projection(cls, source: Chart, target: Chart, kept: Sequence[int]) -> "PolyMap":
        """Coordinate projection keeping the source coordinates ``kept`` in order."""
        return cls(source, target, tuple(source.gens[i] for i in kept))

    @classmethod
    def linear(cls, source: Chart, target: Chart, matrix: Any, offset: Sequence[Any] | None = None) -> "PolyMap":
        m = Matrix(matrix)
        if m.shape != (target.dim, source.dim):
            raise ValueError(f"Matrix shape {m.shape} does not fit {source.dim} -> {target.dim}")
        gens = source.gens
        comps = []
        for i in range(target.dim):
            c = source.constant(offset[i] if offset else 0)
            for j in range(source.dim):
                if m[i, j] != 0:
                    c += source.constant(m[i, j]) * gens[j]
            comps.append(c)
        return cls(source, target, tuple(comps))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PolyMap):
            return NotImplemented
        return (self.source, self.target, self.components) == (other.source, other.target, other.components)

    __hash__ = None

    def __call__(self, point: Sequence[Any]) -> tuple[Rational, ...]:
        return tuple(evaluate(c, point) for c in self.components)

    def pull_scalar(self, f: Any) -> Any:
        """``f o phi`` for a polynomial on the target chart."""
        return substitute(coerce_poly(self.target, f), self.components, self.source.ring)

    def compose(self, inner: "PolyMap") -> "PolyMap":
        """``self o inner``."""
        if inner.target != self.source:
            raise ChartMismatchError("Composition of maps with mismatched charts")
        return PolyMap(inner.source, self.target, tuple(inner.pull_scalar(c) for c in self.components))

    def jacobian(self) -> list[list[Any]]:
        gens = self.source.gens
        return [[c.diff(g) for g in gens] for c in self.components]

    @property
    def is_linear(self) -> bool:
        return all(max((sum(m) for m in c.keys()), default=0) <= 1 for c in self.components)


def pullback(phi: PolyMap, a: DiffForm) -> DiffForm:
    """``phi^* a``: coefficients composed with ``phi``, differentials replaced by ``d(phi_j)``."""
    phi.target.require_same(a.chart)
    jac = phi.jacobian()
    differentials = [
        DiffForm(phi.source, 1, {(i,): row[i] for i in range(phi.source.dim)}) for row in jac
    ]
    result = DiffForm.zero(phi.source, a.degree)
    for idx, c in a.coeffs.items():
        term = DiffForm.scalar(phi.source, phi.pull_scalar(c))
        for j in idx:
            term = wedge(term, differentials[j])
        result = result + term
    if a.order is not None:
        result = result.truncated(a.order)
    return result


def pushforward_linear(matrix: Any, v: MultiVector, target: Chart) -> MultiVector:
    """Pushforward of a multivector by a constant linear map ``L: source -> target``.

    Coefficients are carried along by ``L^{-1}`` when ``L`` is invertible; otherwise they
    must be constant.
    """
    m = Matrix(matrix)
    source = v.chart
    if m.shape != (target.dim, source.dim):
        raise ValueError(f"Matrix shape {m.shape} does not fit {source.dim} -> {target.dim}")
    if m.is_square and m.det() != 0:
        back = PolyMap.linear(target, source, m.inv())
        carry = back.pull_scalar
    elif all(is_constant(c) for c in v.coeffs.values()):
        def carry(c):
            return target.constant(c.get(tuple(0 for _ in source.gens), 0))
    else:
        raise ValueError("Non-invertible pushforward needs constant coefficients")

    terms: dict = {}
    for idx, c in v.coeffs.items():
        image = carry(c)
        expanded = {(): image}
        for i in idx:
            nxt = {}
            for key, value in expanded.items():
                for j in range(target.dim):
                    if m[j, i] == 0:
                        continue
                    sign, new_key = sort_indices(key + (j,))
                    if sign:
                        prev = nxt.get(new_key, target.ring.zero)
                        nxt[new_key] = prev + sign * target.constant(m[j, i]) * value
            expanded = nxt
        for key, value in expanded.items():
            terms[key] = terms.get(key, target.ring.zero) + value
    result = MultiVector(target, v.degree, terms)
    return result if v.order is None else result.truncated(v.order)

