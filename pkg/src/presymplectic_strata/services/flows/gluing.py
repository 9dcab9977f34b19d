"""Linear parts of the gluing morphisms between strata and the one-sided extension estimate.

A gluing morphism runs from the lower stratum to the higher one. Foliation forms are pulled
back along the tube projection: ``d/dp_a`` of the lower Gotay chart goes to
``sum_b M[a, b] d/dp'_b`` where ``F_lower M = d(pi) F_higher``. The optional gauge family acts
afterwards through ``phi_1`` and the projection.
"""

import logging
from dataclasses import dataclass
from math import comb, log

import numpy as np
from pydantic import BaseModel
from sympy import Matrix

from presymplectic_strata.core.config import LOGGER_NAME
from presymplectic_strata.errors import KernelInclusionError
from presymplectic_strata.services.algebra.fields import MultiVector, wedge
from presymplectic_strata.services.algebra.maps import PolyMap
from presymplectic_strata.services.algebra.polynomials import evaluate, meet_orders, to_rational
from presymplectic_strata.services.flows.gauge import GaugeFamily
from presymplectic_strata.services.foliation.tubes import TubeSystem, tube_kernel_check
from presymplectic_strata.services.linf.vdata import AbelianElement, LinfStructure, VData

logger = logging.getLogger(LOGGER_NAME)


class DirectednessReport(BaseModel):
    c: str
    C: str
    value_at_positive: float
    value_at_negative: float
    derivative_estimates: list[float]
    log_profile_negative: list[float]
    forward_smooth: bool
    backward_divergent: bool
    directed: bool


def _generator(s: float, c: float, big_c: float) -> float:
    """``g(s) = s^-2 exp(-c/s) / C``, extended by ``0`` at ``s = 0``."""
    if s == 0.0:
        return 0.0
    exponent = -c / s - 2.0 * log(abs(s)) - log(big_c)
    return float(np.exp(exponent)) if exponent < 700.0 else float("inf")


def _forward_derivative(k: int, h: float, c: float, big_c: float) -> float:
    """``k``-th forward difference of ``g`` at ``0`` over ``h^k``."""
    total = sum((-1) ** (k - j) * comb(k, j) * _generator(j * h, c, big_c) for j in range(k + 1))
    return total / h**k


def directed_extension_check(
    c: object = 1,
    big_c: object = 1,
    samples: int = 20,
    derivatives: int = 5,
    step: float = 2e-3,
    tolerance: float = 1e-10,
    blow_up: float = 1e3,
) -> DirectednessReport:
    """Flat at ``0+`` and divergent at ``0-``: the profile cannot be continued across ``s = 0``.

    One-sided derivatives at ``0+`` are forward differences at ``step`` and ``step / 2``
    combined by one Richardson step. On the negative side ``log g`` is sampled along
    ``s_j = -0.1 * 2^-j``, so the blow-up never overflows.
    """
    c_value, big_c_value = to_rational(c), to_rational(big_c)
    if c_value <= 0 or big_c_value <= 0:
        raise ValueError("c and C must be positive")
    cf, bf = float(c_value), float(big_c_value)

    estimates = []
    for k in range(1, derivatives + 1):
        coarse = _forward_derivative(k, step, cf, bf)
        fine = _forward_derivative(k, step / 2, cf, bf)
        estimates.append(abs(2.0 * fine - coarse))

    profile = []
    for j in range(samples):
        s = -0.1 * 2.0**-j
        profile.append((-cf / s - 2.0 * log(-s) - log(bf)) / log(10.0))
    increasing = all(b > a for a, b in zip(profile, profile[1:]))

    positive = _generator(0.01, cf, bf)
    negative = _generator(-0.1, cf, bf)
    forward = positive <= tolerance and all(e <= tolerance for e in estimates)
    backward = increasing and negative >= blow_up
    report = DirectednessReport(
        c=str(c_value),
        C=str(big_c_value),
        value_at_positive=positive,
        value_at_negative=negative,
        derivative_estimates=estimates,
        log_profile_negative=profile,
        forward_smooth=forward,
        backward_divergent=backward,
        directed=forward and backward,
    )
    logger.info(f"Directed extension check (c={c_value}, C={big_c_value}): directed={report.directed}")
    return report


class MorphismRecord(BaseModel):
    lower_chart: list[str]
    higher_chart: list[str]
    identity: bool
    fiber_matrix: list[list[str]]
    constant_frames: bool
    gauged: bool
    chain_map: bool
    checked: int
    witness: str | None
    z_bivector: str
    z_extended: str | None


@dataclass(frozen=True, eq=False)
class GluingMorphism:
    """Linear part ``f_1`` of the gluing morphism from ``lower`` to ``higher``."""

    lower: VData
    higher: VData
    base_map: PolyMap
    fiber_matrix: Matrix
    gauge: GaugeFamily | None = None

    def __call__(self, a: AbelianElement) -> AbelianElement:
        a.chart.require_same(self.lower.chart)
        higher = self.higher
        n_low, n_high = self.lower.base_dim, higher.base_dim
        legs = [
            MultiVector(
                higher.chart,
                1,
                {(n_high + b,): self.fiber_matrix[row, b] for b in range(higher.fiber_dim) if self.fiber_matrix[row, b]},
            )
            for row in range(self.lower.fiber_dim)
        ]
        image = MultiVector.zero(higher.chart, a.degree)
        for idx, coefficient in a.coeffs.items():
            term = MultiVector.scalar(higher.chart, self.base_map.pull_scalar(coefficient))
            for i in idx:
                term = wedge(term, legs[i - n_low])
            image = image + term
        if self.gauge is not None:
            image = higher.project(self.gauge.automorphism(image, 1))
        return image

    def then(self, following: "GluingMorphism") -> "GluingMorphism":
        """``following o self``."""
        self.higher.chart.require_same(following.lower.chart)
        if self.gauge is not None or following.gauge is not None:
            raise ValueError("Only ungauged linear parts compose as maps of charts")
        return GluingMorphism(
            self.lower,
            following.higher,
            self.base_map.compose(following.base_map),
            self.fiber_matrix * following.fiber_matrix,
        )


def _fiber_matrix(lower: VData, higher: VData, differential: Matrix) -> Matrix:
    f_low, f_high = lower.f_matrix, higher.f_matrix
    image = differential * f_high
    m_low, m_high = lower.fiber_dim, higher.fiber_dim
    if m_low == 0:
        if m_high and not image.is_zero_matrix:
            raise KernelInclusionError("d(pi) does not kill ker omega_higher over a symplectic stratum")
        return Matrix.zeros(0, m_high)
    if m_high == 0:
        return Matrix.zeros(m_low, 0)
    solution = (f_low.T * f_low).inv() * f_low.T * image
    if f_low * solution != image:
        raise KernelInclusionError("d(pi) does not map the higher leaves into the lower ones")
    return solution


def _z_bivector(vdata: VData) -> Matrix:
    """``(omega|G)^-1 + 0`` as a matrix at the base point, with the Poisson sign convention."""
    polarization = vdata.polarization
    point = polarization.base_point
    g = polarization.g_frame.matrix_at(point)
    return -g * polarization.g_block_at(point).inv() * g.T


def _bivector(chart, matrix: Matrix, placement) -> MultiVector:
    return MultiVector(
        chart,
        2,
        {
            (placement[i], placement[j]): matrix[i, j]
            for i in range(matrix.rows)
            for j in range(i + 1, matrix.cols)
            if matrix[i, j]
        },
    )


def glue_morphism(
    lower: VData,
    higher: VData,
    tube: TubeSystem | None = None,
    gauge: GaugeFamily | None = None,
    samples: int = 3,
    seed: int = 0,
) -> tuple[GluingMorphism, MorphismRecord]:
    """Assemble ``f_1`` and check ``l_1' o f_1 = f_1 o l_1`` on coordinate functions and random forms.

    Without a tube the two strata coincide and ``f_1`` is the identity up to the gauge.
    Residuals are compared to the tracked accuracy of the brackets involved.
    """
    low_base, high_base = lower.splitting.base, higher.splitting.base
    if tube is None:
        low_base.require_same(high_base)
        projection = PolyMap.identity(high_base)
    else:
        tube.chart.require_same(high_base)
        tube.stratum_chart.require_same(low_base)
        check = tube_kernel_check(tube, higher.polarization.omega, lower.polarization.omega, seed=seed)
        if not check.holds:
            raise KernelInclusionError(
                "ker omega_higher is not carried into ker omega_lower by the tube projection",
                witness=check.witnesses[0],
            )
        projection = tube.projection

    point = higher.polarization.base_point
    differential = Matrix([[evaluate(c, point) for c in row] for row in projection.jacobian()])
    fiber_matrix = _fiber_matrix(lower, higher, differential)

    zero_section = PolyMap(higher.chart, high_base, higher.chart.gens[: higher.base_dim])
    components = [zero_section.pull_scalar(c) for c in projection.components]
    components += [higher.chart.ring.zero] * lower.fiber_dim
    morphism = GluingMorphism(lower, higher, PolyMap(higher.chart, lower.chart, components), fiber_matrix, gauge)

    source, target = LinfStructure(lower), LinfStructure(higher)
    rng = np.random.default_rng(seed)
    probes = [lower.coordinate_function(i) for i in range(lower.base_dim)]
    for k in range(lower.fiber_dim):
        probes += [lower.random_element(rng, form_degree=k) for _ in range(samples)]
    witness = None
    for a in probes:
        left, right = target.bracket(morphism(a)), morphism(source.bracket(a))
        residual = left - right
        accuracy = meet_orders(left.accuracy, right.accuracy)
        if accuracy is not None:
            residual = residual.truncated(accuracy)
        if not residual.is_zero:
            witness = f"l_1'(f_1({a.to_text()})) - f_1(l_1({a.to_text()})) = {residual.to_text()}"
            logger.warning(f"Gluing morphism is not a chain map: {witness}")
            break

    z = _z_bivector(lower)
    z_lower = _bivector(low_base, z, range(low_base.dim))
    z_extended = None if tube is None else _bivector(high_base, z, tube.kept)
    identity = tube is None and gauge is None
    record = MorphismRecord(
        lower_chart=list(lower.chart.coord_names),
        higher_chart=list(higher.chart.coord_names),
        identity=identity,
        fiber_matrix=[[str(fiber_matrix[i, j]) for j in range(fiber_matrix.cols)] for i in range(fiber_matrix.rows)],
        constant_frames=lower.polarization.f_frame.is_constant and higher.polarization.f_frame.is_constant,
        gauged=gauge is not None,
        chain_map=witness is None,
        checked=len(probes),
        witness=witness,
        z_bivector=z_lower.to_text(),
        z_extended=None if z_extended is None else z_extended.to_text(),
    )
    logger.info(
        f"Gluing {record.lower_chart} -> {record.higher_chart}: chain map {record.chain_map} on {record.checked} probes"
    )
    return morphism, record


class CompositionRecord(BaseModel):
    holds: bool
    matrix_holds: bool
    checked: int
    witness: str | None


def composition_check(
    first: GluingMorphism, second: GluingMorphism, direct: GluingMorphism, samples: int = 3, seed: int = 0
) -> CompositionRecord:
    """``second o first = direct`` on coordinate functions and random forms of the lowest stratum."""
    first.lower.chart.require_same(direct.lower.chart)
    second.higher.chart.require_same(direct.higher.chart)
    composite = first.then(second)
    matrix_holds = composite.fiber_matrix == direct.fiber_matrix and composite.base_map == direct.base_map
    lower = first.lower
    rng = np.random.default_rng(seed)
    probes = [lower.coordinate_function(i) for i in range(lower.base_dim)]
    for k in range(lower.fiber_dim + 1):
        probes += [lower.random_element(rng, form_degree=k) for _ in range(samples)]
    witness = None
    for a in probes:
        difference = second(first(a)) - direct(a)
        if not difference.is_zero:
            witness = f"f_bc(f_ab({a.to_text()})) - f_ac({a.to_text()}) = {difference.to_text()}"
            break
    return CompositionRecord(holds=witness is None, matrix_holds=matrix_holds, checked=len(probes), witness=witness)
