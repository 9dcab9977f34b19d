"""Model tubular neighborhoods of strata and the polarizations they carry between strata.

A model tube around ``{x_i = 0, i in normal}`` projects by dropping the normal coordinates
and measures distance by ``rho = scale * sum_i x_i^2``.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

from pydantic import BaseModel
from sympy import Matrix, Rational

from presymplectic_strata.core.config import LOGGER_NAME
from presymplectic_strata.errors import KernelInclusionError
from presymplectic_strata.services.algebra.fields import MultiVector
from presymplectic_strata.services.algebra.maps import PolyMap, pullback
from presymplectic_strata.services.algebra.polynomials import (
    Chart,
    evaluate,
    poly_to_text,
    to_rational,
)
from presymplectic_strata.services.foliation.distributions import (
    FrameDistribution,
    Polarization,
    frame_matrix,
    null_distribution,
    sample_points,
)
from presymplectic_strata.services.geometry.stratify import FormField

logger = logging.getLogger(LOGGER_NAME)


@dataclass(frozen=True, eq=False)
class TubeSystem:
    chart: Chart
    normal: tuple[int, ...]
    scale: Any = 1

    def __post_init__(self):
        normal = tuple(sorted(set(self.normal)))
        if any(not 0 <= i < self.chart.dim for i in normal):
            raise ValueError(f"Normal indices {normal} out of range for {self.chart.coord_names}")
        if to_rational(self.scale) <= 0:
            raise ValueError("Tube scale must be positive")
        object.__setattr__(self, "normal", normal)

    @property
    def kept(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.chart.dim) if i not in self.normal)

    @property
    def stratum_chart(self) -> Chart:
        return Chart(tuple(self.chart.coord_names[i] for i in self.kept))

    @property
    def projection(self) -> PolyMap:
        """``pi``: tube -> stratum chart."""
        return PolyMap.projection(self.chart, self.stratum_chart, self.kept)

    @property
    def retraction(self) -> PolyMap:
        """``pi`` seen as an idempotent self-map, normal coordinates set to zero."""
        gens = self.chart.gens
        zero = self.chart.ring.zero
        return PolyMap(self.chart, self.chart, tuple(zero if i in self.normal else g for i, g in enumerate(gens)))

    @property
    def rho(self):
        gens = self.chart.gens
        return self.chart.constant(self.scale) * sum((gens[i] ** 2 for i in self.normal), self.chart.ring.zero)

    def lift(self, v: MultiVector) -> MultiVector:
        """Horizontal lift of a stratum vector field: same components, constant along the fibers."""
        v.chart.require_same(self.stratum_chart)
        components = [self.chart.ring.zero] * self.chart.dim
        for k, c in zip(self.kept, v.components()):
            components[k] = self.projection.pull_scalar(c)
        return MultiVector.vector(self.chart, components)

    def section(self, point: Sequence[Any]) -> tuple[Rational, ...]:
        """Point of the stratum, written in the ambient chart."""
        full = [Rational(0)] * self.chart.dim
        for k, c in zip(self.kept, point):
            full[k] = to_rational(c)
        return tuple(full)

    def check_axioms(self, points: Sequence[Sequence[Any]]) -> bool:
        """``pi o pi = pi``, ``rho = 0`` exactly on the stratum, ``(pi, rho)`` submersive off it."""
        r = self.retraction
        if r.compose(r) != r:
            return False
        if r.pull_scalar(self.rho):
            return False
        gens = self.chart.gens
        rows = [[c.diff(g) for g in gens] for c in self.projection.components]
        rows.append([self.rho.diff(g) for g in gens])
        for point in points:
            if not evaluate(self.rho, point):
                continue
            jac = Matrix([[evaluate(c, point) for c in row] for row in rows])
            if jac.rank() != len(self.kept) + 1:
                logger.debug(f"(pi, rho) is not submersive at {tuple(point)}")
                return False
        return True


class TubeCompatibility(BaseModel):
    projections_commute: bool
    scale_defect: str
    scale_controlled: bool


def tube_compatibility(lower: TubeSystem, higher: TubeSystem) -> TubeCompatibility:
    """Exact ``pi_j o pi_j' = pi_j`` and ``rho_j o pi_j' = rho_j`` for nested model tubes.

    The scale identity fails for coordinate tubes as soon as the higher tube moves a normal
    coordinate of the lower one; the defect ``rho_j o pi_j' - rho_j`` is reported.
    """
    lower.chart.require_same(higher.chart)
    if not set(higher.normal) <= set(lower.normal):
        raise ValueError("Tubes are not nested: the higher normal directions must be normal to the lower stratum")
    commute = lower.retraction.compose(higher.retraction) == lower.retraction
    defect = higher.retraction.pull_scalar(lower.rho) - lower.rho
    return TubeCompatibility(
        projections_commute=commute,
        scale_defect=poly_to_text(defect, lower.chart.coord_names),
        scale_controlled=not defect,
    )


class KernelCheck(BaseModel):
    holds: bool
    checked: int
    witnesses: list[list[str]]


def tube_kernel_check(
    tube: TubeSystem,
    omega: FormField,
    omega_stratum: FormField,
    points: Sequence[Sequence[Any]] | None = None,
    samples: int = 8,
    seed: int = 0,
) -> KernelCheck:
    """``d pi (ker omega_x) <= ker omega_stratum at pi(x)``, exactly at rational points.

    Default points are random stratum points lifted by the zero section.
    """
    omega.chart.require_same(tube.chart)
    omega_stratum.chart.require_same(tube.stratum_chart)
    if points is None:
        region = ((-1, 1),) * len(tube.kept)
        points = [tube.section(p) for p in sample_points(region, samples, seed)]
    jacobian = Matrix([[1 if j == k else 0 for j in range(tube.chart.dim)] for k in tube.kept])
    witnesses = []
    for point in points:
        x = tuple(to_rational(c) for c in point)
        kernel = omega.form.matrix_at(x).nullspace()
        if not kernel:
            continue
        target = omega_stratum.form.matrix_at(tube.projection(x))
        for v in kernel:
            image = jacobian * v
            if any(target * image):
                witnesses.append([str(c) for c in x])
                logger.debug(f"d(pi) moves kernel vector {list(v)} at {x} out of the stratum kernel")
                break
    return KernelCheck(holds=not witnesses, checked=len(points), witnesses=witnesses)


@dataclass(frozen=True, eq=False)
class LowerStratum:
    """Polarized lower stratum with the model tube it is reached through."""

    polarization: Polarization
    tube: TubeSystem


@dataclass(frozen=True, eq=False)
class CompatiblePolarization:
    polarization: Polarization
    lifted: tuple[MultiVector, ...]
    completion: tuple[MultiVector, ...]
    lift_contained: bool
    intersection_inclusion: bool
    checked_points: tuple[tuple, ...] = field(default=())


def _inclusion_at(lifted_g: Matrix, horizontal: Matrix, g: Matrix) -> tuple[bool, bool]:
    """``lift(G_a) <= G_a'`` and ``G_a' cap lift(TM_a) <= lift(G_a)`` at one point."""
    contained = Matrix.hstack(g, lifted_g).rank() == g.rank()
    # intersection of column spaces: nullspace of [G | -H]
    stacked = Matrix.hstack(g, -horizontal)
    basis = [g * v[: g.cols, :] for v in stacked.nullspace()]
    included = all(Matrix.hstack(lifted_g, w).rank() == lifted_g.rank() for w in basis if any(w))
    return contained, included


def compatible_polarization(
    lower: LowerStratum,
    higher: FormField,
    base_point: Sequence[Any] | None = None,
    points: Sequence[Sequence[Any]] | None = None,
) -> CompatiblePolarization:
    """Polarization ``G_a' = lift(G_a) + N`` of the higher stratum.

    ``N`` is picked from the lifted lower kernel and the tube fibers ``ker d(pi)`` until
    ``G_a'`` completes ``ker omega_a'``.
    """
    tube = lower.tube
    higher.chart.require_same(tube.chart)
    lower_pol = lower.polarization
    if not tube.normal and lower_pol.omega.form == higher.form:
        return CompatiblePolarization(
            polarization=lower_pol,
            lifted=lower_pol.g_frame.fields,
            completion=(),
            lift_contained=True,
            intersection_inclusion=True,
        )

    if base_point is None:
        base_point = tuple(
            Rational(1) if i in tube.normal else c
            for i, c in enumerate(tube.section(lower_pol.base_point))
        )
    base = tuple(to_rational(c) for c in base_point)
    points = [base] + [tuple(to_rational(c) for c in p) for p in (points or [])]

    pulled = pullback(tube.projection, lower_pol.omega.form)
    for x in points:
        target = pulled.matrix_at(x)
        for v in higher.form.matrix_at(x).nullspace():
            if any(target * v):
                raise KernelInclusionError(
                    f"ker omega_a' is not inside ker pi^*omega_a at {x}", witness=x
                )

    f_frame = null_distribution(higher, base_point=base)
    lifted = tuple(tube.lift(v) for v in lower_pol.g_frame.fields)
    candidates = [tube.lift(v) for v in lower_pol.f_frame.fields] + [
        MultiVector.coordinate_vector(tube.chart, i) for i in tube.normal
    ]
    chosen = list(lifted)
    completion = []
    for v in candidates:
        if len(chosen) + len(f_frame) == tube.chart.dim:
            break
        trial = frame_matrix(tube.chart, chosen + [v] + list(f_frame.fields), base)
        if trial.rank() == len(chosen) + 1 + len(f_frame):
            chosen.append(v)
            completion.append(v)
    g_frame = FrameDistribution(tube.chart, tuple(chosen), None, base)
    polarization = Polarization(higher, f_frame, g_frame)

    contained = included = True
    for x in points:
        lifted_g = frame_matrix(tube.chart, lifted, x)
        horizontal = frame_matrix(
            tube.chart, [tube.lift(MultiVector.coordinate_vector(tube.stratum_chart, k)) for k in range(len(tube.kept))], x
        )
        c, i = _inclusion_at(lifted_g, horizontal, g_frame.matrix_at(x))
        contained &= c
        included &= i
    if not included:
        logger.warning("G_a' meets the lifted lower tangent bundle outside lift(G_a)")
    return CompatiblePolarization(
        polarization=polarization,
        lifted=lifted,
        completion=tuple(completion),
        lift_contained=contained,
        intersection_inclusion=included,
        checked_points=tuple(points),
    )
