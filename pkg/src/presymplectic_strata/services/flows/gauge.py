"""Gauge Cauchy problems in the truncated derived-bracket algebra.

A gauge family is a time-dependent vector field ``xi_t = sum_j t^j xi_j`` on the Gotay chart.
It moves the generator by ``d/dt Delta_t = [xi_t, Delta_t]`` and acts on elements by the
automorphisms ``phi_t`` with ``d/dt phi_t(y) = [phi_t(y), xi_t]``, ``phi_0 = id``. Everything
stays exact: a constant ``xi`` gives truncated exponentials of ``ad_xi``, otherwise a
rational fourth order scheme is run on the multivector fields themselves.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from math import factorial
from typing import Any

from pydantic import BaseModel
from sympy import Rational

from presymplectic_strata.core.config import LOGGER_NAME, GaugeSettings
from presymplectic_strata.errors import AccuracyExhaustedError
from presymplectic_strata.services.algebra.fields import MultiVector, schouten
from presymplectic_strata.services.algebra.polynomials import Chart, JetOrder, to_rational
from presymplectic_strata.services.flows.integrators import RungeKutta4
from presymplectic_strata.services.linf.vdata import VData

logger = logging.getLogger(LOGGER_NAME)


def field_size(v: MultiVector) -> float:
    """Largest absolute coefficient of ``v``."""
    return max((abs(float(to_rational(c))) for poly in v.coeffs.values() for c in poly.values()), default=0.0)


def _has_constant_terms(v: MultiVector) -> bool:
    return any(not any(monom) for poly in v.coeffs.values() for monom in poly.keys())


@dataclass(frozen=True, eq=False)
class GaugeFamily:
    """``xi_t = sum_j t^j terms[j]`` and the automorphisms ``phi_t`` it generates.

    ``caps`` truncates every bracket. Truncation only commutes with ``ad_xi`` when ``xi`` has
    no constant coefficients, so caps are refused otherwise.
    """

    chart: Chart
    terms: tuple[MultiVector, ...] = ()
    caps: JetOrder | None = None
    max_terms: int = 24
    steps: int = 8

    def __post_init__(self):
        for term in self.terms:
            term.chart.require_same(self.chart)
            if term.degree != 1 and not term.is_zero:
                raise ValueError(f"Gauge generator {term.to_text()} has shifted degree {term.degree - 1}, expected 0")
        if self.caps is not None:
            if self.caps.exhausted:
                raise AccuracyExhaustedError(f"Order caps {self.caps} leave no terms")
            if any(_has_constant_terms(term) for term in self.terms):
                raise ValueError("Order caps need a gauge field without constant coefficients")
        if self.steps < 1 or self.max_terms < 1:
            raise ValueError("steps and max_terms must be positive")

    @property
    def is_constant(self) -> bool:
        return all(term.is_zero for term in self.terms[1:])

    @property
    def is_zero(self) -> bool:
        return all(term.is_zero for term in self.terms)

    def xi(self, t: Any = 0) -> MultiVector:
        t = to_rational(t)
        total = MultiVector.zero(self.chart, 1)
        for j, term in enumerate(self.terms):
            total = total + term * t**j
        return total

    def capped(self, y: MultiVector) -> MultiVector:
        return y if self.caps is None else y.truncated(self.caps)

    def ad(self, y: MultiVector, t: Any = 0) -> MultiVector:
        """``[xi_t, y]`` within the caps."""
        y.chart.require_same(self.chart)
        return self.capped(schouten(self.xi(t), y))

    def adjoint_powers(self, y: MultiVector) -> tuple[list[MultiVector], bool]:
        """``ad_xi^k y`` for the constant part, up to the first vanishing power or ``max_terms``."""
        powers = [self.capped(y)]
        while len(powers) < self.max_terms:
            following = self.ad(powers[-1])
            if following.is_zero:
                return powers, True
            powers.append(following)
        return powers, False

    def exponential(self, y: MultiVector, t: Any, sign: int = 1) -> MultiVector:
        """``sum_k (sign t)^k / k! ad_xi^k y``."""
        powers, terminated = self.adjoint_powers(y)
        if not terminated:
            logger.warning(f"ad_xi series of {y.to_text()} cut after {self.max_terms} terms")
        s = sign * to_rational(t)
        total = 0 * powers[0]
        for k, power in enumerate(powers):
            total = total + power * (s**k / factorial(k))
        return total

    def integrate(
        self, rhs: Callable[[Rational, MultiVector], MultiVector], y0: MultiVector, t: Any
    ) -> MultiVector:
        """Exact fourth order steps of ``y' = rhs(s, y)`` from ``0`` to ``t``."""
        t = to_rational(t)
        if t == 0:
            return y0
        stepper = RungeKutta4(exact=True)
        dt = t / self.steps
        y = y0
        for i in range(self.steps):
            y = stepper(rhs, i * dt, y, dt)
        return y

    def automorphism(self, y: MultiVector, t: Any) -> MultiVector:
        """``phi_t(y)``; for constant ``xi`` this is ``exp(-t ad_xi) y``."""
        if self.is_constant:
            return self.exponential(y, t, sign=-1)
        return self.integrate(lambda s, z: -self.ad(z, s), self.capped(y), t)

    def transported(self, delta0: MultiVector, t: Any) -> MultiVector:
        """Solution of ``d/dt Delta_t = [xi_t, Delta_t]`` through ``delta0``."""
        if self.is_constant:
            return self.exponential(delta0, t)
        return self.integrate(lambda s, z: self.ad(z, s), self.capped(delta0), t)

    def derivative_defect(self, y: MultiVector, t: Any) -> float:
        """Size of ``d/dt phi_t(y) - [phi_t(y), xi_t]``.

        Exact from the series when ``xi`` is constant, a centered difference otherwise.
        """
        t = to_rational(t)
        target = -self.ad(self.automorphism(y, t), t)
        if self.is_constant:
            powers, _ = self.adjoint_powers(y)
            derivative = 0 * powers[0]
            for k, power in enumerate(powers[1:], start=1):
                derivative = derivative - power * ((-t) ** (k - 1) / factorial(k - 1))
            return field_size(derivative - target)
        h = Rational(1, 4 * self.steps)
        ahead, behind = self.automorphism(y, t + h), self.automorphism(y, t - h)
        return field_size((ahead - behind) * (1 / (2 * h)) - target)


@dataclass(frozen=True, eq=False)
class DeltaFamily:
    """``Delta_t`` on a rational time grid."""

    times: tuple[Rational, ...]
    values: tuple[MultiVector, ...]

    def at(self, t: Any) -> MultiVector:
        t = to_rational(t)
        try:
            return self.values[self.times.index(t)]
        except ValueError:
            raise ValueError(f"Time {t} is not on the grid {[str(s) for s in self.times]}") from None

    def texts(self) -> list[str]:
        return [v.to_text() for v in self.values]


class GaugeReport(BaseModel):
    constant: bool
    terminated: bool | None
    series_terms: int | None
    caps: str | None
    times: list[str]
    deltas: list[str]
    phi_identity_at_zero: bool
    phi_defect: float
    triviality_profile: list[float]
    kernel_preserved: bool
    kernel_failures: list[str]


def _kernel_basis(vdata: VData) -> list[MultiVector]:
    """Elements killed by the projection: ``p_a``, ``d/dx_i``, ``p_a d/dx_i`` and ``p_a d/dp_b``."""
    chart = vdata.chart
    n, m = vdata.base_dim, vdata.fiber_dim
    fibers = chart.gens[n:]
    basis = [MultiVector.scalar(chart, p) for p in fibers]
    for i in range(n + m):
        vector = MultiVector.coordinate_vector(chart, i)
        if i < n:
            basis.append(vector)
        basis.extend(vector * p for p in fibers)
    return basis


def kernel_preservation(family: GaugeFamily, vdata: VData, times: Sequence[Any]) -> list[str]:
    """``[xi_t, b]`` for the kernel basis ``b`` of the projection that leave the kernel."""
    failures = []
    for t in times:
        for b in _kernel_basis(vdata):
            image = vdata.project(family.ad(b, t))
            if not image.is_zero:
                failures.append(f"t={to_rational(t)}: pi[xi_t, {b.to_text()}] = {image.to_text()}")
    return failures


def gauge_flow(
    vdata: VData,
    xi: GaugeFamily | MultiVector | Sequence[MultiVector],
    delta0: MultiVector,
    steps: int | None = None,
    caps: JetOrder | None = None,
    settings: GaugeSettings | None = None,
) -> tuple[DeltaFamily, GaugeFamily, GaugeReport]:
    """Solve the gauge Cauchy problem for ``Delta`` and ``phi`` on ``[0, 1]`` and audit it.

    The audit checks ``phi_0 = id`` and the ``phi`` equation on coordinate functions and
    vectors, integrates ``a' = pi[a, xi_t]`` from ``a_0 = 0`` and tests whether
    ``xi_t`` preserves the kernel of the projection.
    """
    settings = settings or GaugeSettings()
    steps = steps or settings.steps
    chart = vdata.chart
    delta0.chart.require_same(chart)
    if vdata.orders.exhausted or (delta0.accuracy is not None and delta0.accuracy.exhausted):
        raise AccuracyExhaustedError(
            f"No accuracy left for the gauge flow of {delta0.to_text()}",
            available=str(delta0.accuracy or vdata.orders),
        )
    if isinstance(xi, GaugeFamily):
        family = xi
    else:
        terms = (xi,) if isinstance(xi, MultiVector) else tuple(xi)
        family = GaugeFamily(chart, terms, caps, settings.max_terms, steps)
    family.chart.require_same(chart)

    times = tuple(Rational(k, steps) for k in range(steps + 1))
    if family.is_constant:
        powers, terminated = family.adjoint_powers(delta0)
        series_terms = len(powers)
    else:
        terminated, series_terms = None, None
    deltas = DeltaFamily(times, tuple(family.transported(delta0, t) for t in times))

    probes = [MultiVector.scalar(chart, g) for g in chart.gens]
    probes += [MultiVector.coordinate_vector(chart, i) for i in range(chart.dim)]
    identity = all(family.automorphism(y, 0) == family.capped(y) for y in probes)
    probe_times = times if family.is_constant else times[1:-1] or (Rational(1, 2),)
    defect = max(family.derivative_defect(y, t) for y in probes for t in probe_times)

    zero = MultiVector.zero(chart, delta0.degree)
    profile = [
        field_size(family.integrate(lambda s, a: vdata.project(-family.ad(a, s)), zero, t)) for t in times
    ]

    kernel_times = [Rational(k, settings.kernel_times - 1) for k in range(settings.kernel_times)]
    failures = kernel_preservation(family, vdata, [0] if family.is_constant else kernel_times)
    if failures:
        logger.warning(f"Gauge field leaves the kernel of the projection: {failures[0]}")

    report = GaugeReport(
        constant=family.is_constant,
        terminated=terminated,
        series_terms=series_terms,
        caps=None if family.caps is None else str(family.caps),
        times=[str(t) for t in times],
        deltas=deltas.texts(),
        phi_identity_at_zero=identity,
        phi_defect=defect,
        triviality_profile=profile,
        kernel_preserved=not failures,
        kernel_failures=failures,
    )
    logger.info(
        f"Gauge flow of {delta0.to_text()} by {family.xi(0).to_text()}: Delta_1 = {deltas.values[-1].to_text()}"
    )
    return deltas, family, report
