"""Charts, exact polynomial scalars and jets.

Coefficients live in sympy's sparse polynomial rings over ``QQ`` (``sympy.polys.rings``):
a ``PolyElement`` is a dict from exponent tuples to rationals and is canonical by
construction (no zero coefficients, monomials keyed by exponent vectors).

Jets are polynomials modulo monomials above a ``JetOrder``. On a split chart the order
has two components: base-variable degree and fiber-variable degree.
"""

import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Union

from sympy import Rational
from sympy.polys.domains import QQ
from sympy.polys.rings import PolyElement, PolyRing, ring

from presymplectic_strata.errors import ChartMismatchError

_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

Number = Union[int, Fraction, Rational]


def to_qq(value: Any):
    """Convert an int, Fraction, sympy Rational or QQ element to a QQ element."""
    if hasattr(value, "p") and hasattr(value, "q"):
        return QQ(int(value.p), int(value.q))
    if hasattr(value, "numerator") and hasattr(value, "denominator"):
        return QQ(int(value.numerator), int(value.denominator))
    r = Rational(value)
    return QQ(int(r.p), int(r.q))


def to_rational(value: Any) -> Rational:
    if hasattr(value, "numerator") and hasattr(value, "denominator"):
        return Rational(int(value.numerator), int(value.denominator))
    return Rational(value)


@dataclass(frozen=True)
class Chart:
    """Coordinate chart; ``split = (base_dims, fiber_dims)`` marks total-space charts."""

    coord_names: tuple[str, ...]
    split: tuple[int, int] | None = None

    def __post_init__(self):
        names = tuple(self.coord_names)
        object.__setattr__(self, "coord_names", names)
        if not names:
            raise ValueError("A chart needs at least one coordinate")
        if len(set(names)) != len(names):
            raise ValueError(f"Coordinate names are not unique: {names}")
        for name in names:
            if not _NAME.fullmatch(name) or name == "d":
                raise ValueError(f"Invalid coordinate name: {name!r}")
            if name.startswith("d") and name[1:] in names:
                raise ValueError(f"Coordinate {name!r} clashes with the differential of {name[1:]!r}")
        if self.split is not None and sum(self.split) != len(names):
            raise ValueError(f"Split {self.split} does not add up to dimension {len(names)}")

    @property
    def dim(self) -> int:
        return len(self.coord_names)

    @cached_property
    def ring(self) -> PolyRing:
        poly_ring, *_ = ring(",".join(self.coord_names), QQ)
        return poly_ring

    @property
    def gens(self) -> tuple[PolyElement, ...]:
        return tuple(self.ring.gens)

    @property
    def base_indices(self) -> tuple[int, ...]:
        base = self.split[0] if self.split else self.dim
        return tuple(range(base))

    @property
    def fiber_indices(self) -> tuple[int, ...]:
        if not self.split:
            return ()
        return tuple(range(self.split[0], self.dim))

    def index(self, name: str) -> int:
        try:
            return self.coord_names.index(name)
        except ValueError:
            raise ValueError(f"Unknown coordinate {name!r} on chart {self.coord_names}")

    def coordinate(self, name_or_index: str | int) -> PolyElement:
        i = name_or_index if isinstance(name_or_index, int) else self.index(name_or_index)
        return self.ring.gens[i]

    def constant(self, value: Any) -> PolyElement:
        return self.ring.ground_new(to_qq(value))

    def with_fibers(self, fiber_names: Sequence[str]) -> "Chart":
        """Split chart ``(x, p)`` over this chart with the given fiber coordinates."""
        return Chart(self.coord_names + tuple(fiber_names), (self.dim, len(fiber_names)))

    def extended(self, extra_names: Sequence[str]) -> "Chart":
        return Chart(self.coord_names + tuple(extra_names))

    def require_same(self, other: "Chart") -> None:
        if self != other:
            raise ChartMismatchError(
                f"Chart mismatch: {self.coord_names} vs {other.coord_names}"
            )


@dataclass(frozen=True)
class JetOrder:
    """Truncation order; ``fiber=None`` truncates by total degree in ``base``."""

    base: int
    fiber: int | None = None

    def lowered(self, steps: int = 1) -> "JetOrder":
        return JetOrder(
            self.base - steps, None if self.fiber is None else self.fiber - steps
        )

    def meet(self, other: "JetOrder | None") -> "JetOrder":
        if other is None:
            return self
        if self.fiber is None or other.fiber is None:
            fiber = self.fiber if other.fiber is None else other.fiber
        else:
            fiber = min(self.fiber, other.fiber)
        return JetOrder(min(self.base, other.base), fiber)

    @property
    def exhausted(self) -> bool:
        return self.base < 0 or (self.fiber is not None and self.fiber < 0)

    def keeps(self, monom: Sequence[int], chart: Chart) -> bool:
        if self.fiber is None or not chart.split:
            return sum(monom) <= self.base
        b = chart.split[0]
        return sum(monom[:b]) <= self.base and sum(monom[b:]) <= self.fiber

    def __str__(self) -> str:
        return f"{self.base}" if self.fiber is None else f"({self.base},{self.fiber})"


def meet_orders(*orders: JetOrder | None) -> JetOrder | None:
    result = None
    for order in orders:
        if order is not None:
            result = order if result is None else result.meet(order)
    return result


def truncate(
    poly: PolyElement,
    order: JetOrder | None,
    chart: Chart,
    base_point: Sequence[Any] | None = None,
) -> PolyElement:
    """Drop monomials above ``order``, with degrees measured from ``base_point``."""
    if order is None:
        return poly
    shift = base_point is not None and any(b != 0 for b in base_point)
    if shift:
        gens = chart.gens
        poly = poly.compose([(g, g + to_qq(b)) for g, b in zip(gens, base_point)])
    kept = poly.ring.from_dict(
        {m: c for m, c in poly.items() if order.keeps(m, chart)}
    )
    if shift:
        kept = kept.compose([(g, g - to_qq(b)) for g, b in zip(gens, base_point)])
    return kept


def evaluate(poly: PolyElement, point: Sequence[Any]) -> Rational:
    """Exact value at a rational point."""
    values = [to_rational(x) for x in point]
    total = Rational(0)
    for monom, coeff in poly.items():
        term = to_rational(coeff)
        for x, e in zip(values, monom):
            if e:
                term *= x**e
        total += term
    return total


def evaluate_float(poly: PolyElement, point: Sequence[float]) -> float:
    total = 0.0
    for monom, coeff in poly.items():
        term = float(coeff.numerator) / float(coeff.denominator)
        for x, e in zip(point, monom):
            if e:
                term *= float(x) ** e
        total += term
    return total


def substitute(
    poly: PolyElement, images: Sequence[PolyElement], target_ring: PolyRing
) -> PolyElement:
    """``poly(images[0], images[1], ...)`` computed in ``target_ring``."""
    result = target_ring.zero
    for monom, coeff in poly.items():
        term = target_ring.ground_new(coeff)
        for image, e in zip(images, monom):
            if e:
                term = term * image**e
        result += term
    return result


def is_constant(poly: PolyElement) -> bool:
    return all(not any(m) for m in poly.keys())


def constant_term(poly: PolyElement) -> Rational:
    return to_rational(poly.get(tuple(0 for _ in poly.ring.gens), QQ(0)))


def total_degree(poly: PolyElement) -> int:
    """Total degree, ``-1`` for the zero polynomial."""
    return max((sum(m) for m in poly.keys()), default=-1)


def _monomial_text(monom: Sequence[int], names: Sequence[str]) -> str:
    parts = []
    for name, e in zip(names, monom):
        if e == 1:
            parts.append(name)
        elif e > 1:
            parts.append(f"{name}^{e}")
    return "*".join(parts)


def poly_to_text(poly: PolyElement, names: Sequence[str]) -> str:
    """Canonical text: ascending total degree, then ``x1`` before ``x2``."""
    if not poly:
        return "0"
    terms = []
    for monom in sorted(poly.keys(), key=lambda m: (sum(m), tuple(-e for e in m))):
        coeff = to_rational(poly[monom])
        mono = _monomial_text(monom, names)
        if not mono:
            terms.append(str(coeff))
        elif coeff == 1:
            terms.append(mono)
        elif coeff == -1:
            terms.append(f"-{mono}")
        else:
            terms.append(f"{coeff}*{mono}")
    return join_signed(terms)


def join_signed(terms: Iterable[str]) -> str:
    text = ""
    for i, term in enumerate(terms):
        if i == 0:
            text = term
        elif term.startswith("-"):
            text += f" - {term[1:]}"
        else:
            text += f" + {term}"
    return text or "0"


def coerce_poly(chart: Chart, value: Any) -> PolyElement:
    if isinstance(value, (PolyScalar, JetScalar)):
        chart.require_same(value.chart)
        return value.poly
    if isinstance(value, PolyElement):
        if value.ring != chart.ring:
            raise ChartMismatchError("Polynomial belongs to a different chart")
        return value
    return chart.constant(value)


@dataclass(frozen=True)
class PolyScalar:
    """Exact polynomial scalar field on a chart."""

    chart: Chart
    poly: PolyElement

    def __post_init__(self):
        if self.poly.ring != self.chart.ring:
            raise ChartMismatchError("Polynomial ring does not match the chart")

    @classmethod
    def from_terms(cls, chart: Chart, terms: dict[tuple[int, ...], Any]) -> "PolyScalar":
        return cls(chart, chart.ring.from_dict({m: to_qq(c) for m, c in terms.items()}))

    def __add__(self, other: Any) -> "PolyScalar":
        return PolyScalar(self.chart, self.poly + coerce_poly(self.chart, other))

    __radd__ = __add__

    def __sub__(self, other: Any) -> "PolyScalar":
        return PolyScalar(self.chart, self.poly - coerce_poly(self.chart, other))

    def __neg__(self) -> "PolyScalar":
        return PolyScalar(self.chart, -self.poly)

    def __mul__(self, other: Any) -> "PolyScalar":
        return PolyScalar(self.chart, self.poly * coerce_poly(self.chart, other))

    __rmul__ = __mul__

    def diff(self, index: int) -> "PolyScalar":
        return PolyScalar(self.chart, self.poly.diff(self.chart.ring.gens[index]))

    def __call__(self, point: Sequence[Any]) -> Rational:
        return evaluate(self.poly, point)

    @property
    def degree(self) -> int:
        return total_degree(self.poly)

    def truncate(
        self, order: int | JetOrder, base_point: Sequence[Any] | None = None
    ) -> "JetScalar":
        order = order if isinstance(order, JetOrder) else JetOrder(order)
        point = tuple(to_rational(b) for b in base_point) if base_point else None
        return JetScalar(self.chart, self.poly, order, point)

    def to_text(self) -> str:
        return poly_to_text(self.poly, self.chart.coord_names)


@dataclass(frozen=True)
class JetScalar:
    """Jet at ``base_point`` (origin by default): representative modulo degrees above ``order``."""

    chart: Chart
    poly: PolyElement
    order: JetOrder
    base_point: tuple[Rational, ...] | None = field(default=None)

    def __post_init__(self):
        if self.poly.ring != self.chart.ring:
            raise ChartMismatchError("Polynomial ring does not match the chart")
        object.__setattr__(
            self, "poly", truncate(self.poly, self.order, self.chart, self.base_point)
        )

    def _same(self, other: Any) -> PolyElement:
        if isinstance(other, JetScalar) and (
            other.order != self.order or other.base_point != self.base_point
        ):
            raise ValueError("Jets with different orders or base points do not combine")
        return coerce_poly(self.chart, other)

    def _new(self, poly: PolyElement) -> "JetScalar":
        return JetScalar(self.chart, poly, self.order, self.base_point)

    def __add__(self, other: Any) -> "JetScalar":
        return self._new(self.poly + self._same(other))

    __radd__ = __add__

    def __sub__(self, other: Any) -> "JetScalar":
        return self._new(self.poly - self._same(other))

    def __neg__(self) -> "JetScalar":
        return self._new(-self.poly)

    def __mul__(self, other: Any) -> "JetScalar":
        return self._new(self.poly * self._same(other))

    __rmul__ = __mul__

    def diff(self, index: int) -> "JetScalar":
        # Only degrees below the order survive exactly; callers track that via accuracy.
        return self._new(self.poly.diff(self.chart.ring.gens[index]))

    def to_text(self) -> str:
        return poly_to_text(self.poly, self.chart.coord_names)
