"""Null distributions, polarizations and the Gotay normal form of a presymplectic form."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from functools import reduce
from itertools import combinations
from typing import Any

import numpy as np
from pydantic import BaseModel
from sympy import Matrix, Rational, cancel, fraction, lcm

from presymplectic_strata.core.config import LOGGER_NAME
from presymplectic_strata.errors import (
    DegenerateFormError,
    NonPolynomialKernelError,
    RankJumpError,
)
from presymplectic_strata.services.algebra.fields import (
    DiffForm,
    MultiVector,
    exterior_d,
    interior,
    schouten,
)
from presymplectic_strata.services.algebra.maps import PolyMap, pullback
from presymplectic_strata.services.algebra.polynomials import (
    Chart,
    JetOrder,
    evaluate,
    to_rational,
)
from presymplectic_strata.services.geometry.stratify import Box, FormField

logger = logging.getLogger(LOGGER_NAME)


def form_pairing(form: DiffForm, u: MultiVector, v: MultiVector):
    """``omega(u, v)`` as a polynomial."""
    return interior(v, interior(u, form)).coefficient(())


def sample_points(region: Box, count: int, seed: int, grid: int = 64) -> list[tuple[Rational, ...]]:
    """Rational points on a ``grid``-fine lattice of the box."""
    rng = np.random.default_rng(seed)
    points = []
    for _ in range(count):
        points.append(
            tuple(
                to_rational(lo) + (to_rational(hi) - to_rational(lo)) * Rational(int(rng.integers(0, grid + 1)), grid)
                for lo, hi in region
            )
        )
    return points


def box_center(region: Box) -> tuple[Rational, ...]:
    return tuple((to_rational(lo) + to_rational(hi)) / 2 for lo, hi in region)


def frame_matrix(chart: Chart, fields: Sequence[MultiVector], point: Sequence[Any]) -> Matrix:
    """Vector fields evaluated at ``point``, one per column."""
    n = chart.dim
    return Matrix.hstack(
        Matrix.zeros(n, 0), *[Matrix(n, 1, [evaluate(c, point) for c in v.components()]) for v in fields]
    )


@dataclass(frozen=True, eq=False)
class FrameDistribution:
    """Distribution spanned by polynomial vector fields; ``rank`` is its rank at ``base_point``."""

    chart: Chart
    fields: tuple[MultiVector, ...]
    rank: int | None = None
    base_point: tuple | None = None

    def __post_init__(self):
        fields = tuple(self.fields)
        object.__setattr__(self, "fields", fields)
        for v in fields:
            v.chart.require_same(self.chart)
            if v.degree != 1:
                raise ValueError(f"Frame fields must be vector fields, got degree {v.degree}")
        point = tuple(to_rational(c) for c in (self.base_point or (0,) * self.chart.dim))
        object.__setattr__(self, "base_point", point)
        actual = self.matrix_at(point).rank() if fields else 0
        declared = len(fields) if self.rank is None else self.rank
        if actual != declared:
            raise ValueError(f"Frame has rank {actual} at {point}, declared {declared}")
        object.__setattr__(self, "rank", declared)

    @classmethod
    def coordinate(cls, chart: Chart, indices: Sequence[int], base_point=None) -> "FrameDistribution":
        return cls(chart, tuple(MultiVector.coordinate_vector(chart, i) for i in indices), None, base_point)

    @classmethod
    def constant(cls, chart: Chart, vectors: Sequence[Sequence[Any]], base_point=None) -> "FrameDistribution":
        return cls(chart, tuple(MultiVector.vector(chart, list(v)) for v in vectors), None, base_point)

    def __len__(self) -> int:
        return len(self.fields)

    @property
    def is_constant(self) -> bool:
        return all(v.is_constant for v in self.fields)

    def matrix_at(self, point: Sequence[Any]) -> Matrix:
        return frame_matrix(self.chart, self.fields, point)

    def contains(self, v: MultiVector, point: Sequence[Any]) -> bool:
        frame = self.matrix_at(point)
        column = Matrix([evaluate(c, point) for c in v.components()])
        return Matrix.hstack(frame, column).rank() == frame.rank()

    def to_text(self) -> str:
        return "span{" + ", ".join(v.to_text() for v in self.fields) + "}"


def _kernel_frame_polynomial(omega: FormField, m: int) -> tuple[MultiVector, ...]:
    chart = omega.chart
    n = chart.dim
    rows = omega.form.poly_matrix()
    zero_columns = [j for j in range(n) if all(not rows[i][j] for i in range(n))]
    if len(zero_columns) == m:
        return tuple(MultiVector.coordinate_vector(chart, j) for j in zero_columns)

    symbolic = Matrix(n, n, lambda i, j: rows[i][j].as_expr())
    symbols = chart.ring.symbols
    frame = []
    for vector in symbolic.nullspace(simplify=True):
        entries = [cancel(e) for e in vector]
        denominators = [fraction(e)[1] for e in entries]
        scale = reduce(lcm, denominators, 1)
        cleared = [cancel(e * scale) for e in entries]
        if not all(e.is_polynomial(*symbols) for e in cleared):
            raise NonPolynomialKernelError(f"Kernel vector {list(vector)} has no polynomial representative")
        frame.append(MultiVector.vector(chart, [chart.ring.from_expr(e) for e in cleared]))
    if len(frame) != m:
        raise NonPolynomialKernelError(f"Generic kernel has dimension {len(frame)}, expected {m}")
    return tuple(frame)


def null_distribution(
    omega: FormField,
    region: Box | None = None,
    base_point: Sequence[Any] | None = None,
    samples: int = 8,
    seed: int = 0,
) -> FrameDistribution:
    """Polynomial frame of ``ker omega`` on a region of constant nullity.

    Constant forms get the exact constant kernel; otherwise a coordinate-aligned kernel or a
    nullspace with polynomial entries. Without a region only the base point is checked.
    """
    chart = omega.chart
    n = chart.dim
    if base_point is None:
        base_point = box_center(region) if region else (0,) * n
    point = tuple(to_rational(c) for c in base_point)
    m = n - omega.form.matrix_at(point).rank()

    for witness in sample_points(region, samples, seed) if region else []:
        nullity = n - omega.form.matrix_at(witness).rank()
        if nullity != m:
            raise RankJumpError(
                f"Nullity jumps from {m} at {point} to {nullity} at {witness}", witness=witness
            )

    if m == 0:
        return FrameDistribution(chart, (), 0, point)
    if omega.form.is_constant:
        vectors = omega.form.matrix_at(point).nullspace()
        frame = tuple(MultiVector.vector(chart, list(v)) for v in vectors)
    else:
        frame = _kernel_frame_polynomial(omega, m)

    for witness in [point] + (sample_points(region, samples, seed + 1) if region else []):
        if frame_matrix(chart, frame, witness).rank() != m:
            raise NonPolynomialKernelError(f"Polynomial kernel frame degenerates at {witness}")
    distribution = FrameDistribution(chart, frame, m, point)
    logger.debug(f"Null distribution of {omega.to_text()}: {distribution.to_text()}")
    return distribution


def frobenius_check(distribution: FrameDistribution, trials: int = 4, seed: int = 0) -> bool:
    """Involutivity: every pairwise bracket lies in the span at generic points.

    Generic ranks are the maximal exact ranks over random rational points.
    """
    chart = distribution.chart
    fields = distribution.fields
    rng = np.random.default_rng(seed)
    points = [
        tuple(Rational(int(rng.integers(-50, 51)), int(rng.integers(1, 8))) for _ in range(chart.dim))
        for _ in range(trials)
    ]

    def generic_rank(columns: Sequence[MultiVector]) -> int:
        return max(frame_matrix(chart, columns, p).rank() for p in points)

    base = generic_rank(fields)
    for u, v in combinations(fields, 2):
        bracket = schouten(u, v)
        if bracket.is_zero:
            continue
        if generic_rank(fields + (bracket,)) > base:
            logger.debug(f"Bracket {bracket.to_text()} leaves {distribution.to_text()}")
            return False
    return True


@dataclass(frozen=True, eq=False)
class Polarization:
    """Splitting ``TM = G + TF`` with ``TF`` isotropic for ``omega`` and ``omega|G`` nondegenerate.

    ``thickening`` is the rank of the trivial ``R^k`` summand of ``G x R^k`` after a
    stabilization; those directions sit in the F-frame since ``pi_1^* omega`` vanishes on them.
    """

    omega: FormField
    f_frame: FrameDistribution
    g_frame: FrameDistribution
    thickening: int = 0

    def __post_init__(self):
        if not 0 <= self.thickening <= len(self.f_frame):
            raise ValueError(f"Thickening {self.thickening} outside 0..{len(self.f_frame)}")
        form = self.omega.form
        for u, v in combinations(self.f_frame.fields, 2):
            if form_pairing(form, u, v):
                raise ValueError(f"omega does not vanish on the F-frame: omega({u}, {v}) != 0")
        point = self.f_frame.base_point
        n = self.omega.dim
        if len(self.f_frame) + len(self.g_frame) != n or self.basis_at(point).rank() != n:
            raise ValueError(f"F- and G-frames do not form a basis at {point}")
        if self.g_block_at(point).det() == 0:
            raise DegenerateFormError(f"omega is degenerate on {self.g_frame.to_text()} at {point}")

    @property
    def chart(self) -> Chart:
        return self.omega.chart

    @property
    def base_point(self) -> tuple:
        return self.f_frame.base_point

    @property
    def nullity(self) -> int:
        return len(self.f_frame)

    def basis_at(self, point: Sequence[Any]) -> Matrix:
        """Columns ``[G | F]``."""
        return Matrix.hstack(self.g_frame.matrix_at(point), self.f_frame.matrix_at(point))

    def g_block_at(self, point: Sequence[Any]) -> Matrix:
        g = self.g_frame.matrix_at(point)
        return g.T * self.omega.form.matrix_at(point) * g

    @property
    def g_rank(self) -> int:
        """Rank of ``G x R^k``."""
        return len(self.g_frame) + self.thickening

    @property
    def virtual_dim(self) -> int:
        return self.omega.dim - self.g_rank


def polarization_complement(
    omega: FormField,
    f_frame: FrameDistribution,
    hint: FrameDistribution | None = None,
) -> Polarization:
    """Complete ``F = ker omega`` by the Euclidean complement at the base point, or by ``hint``."""
    chart = omega.chart
    point = f_frame.base_point
    for v in f_frame.fields:
        if not interior(v, omega.form).is_zero:
            raise ValueError(f"{v.to_text()} is not in the kernel of {omega.to_text()}")
    if len(f_frame) != omega.dim - omega.form.matrix_at(point).rank():
        raise ValueError(f"{f_frame.to_text()} does not span the kernel at {point}")

    if hint is None:
        f_matrix = f_frame.matrix_at(point)
        vectors = f_matrix.T.nullspace() if len(f_frame) else [Matrix.eye(chart.dim)[:, i] for i in range(chart.dim)]
        g_frame = FrameDistribution.constant(chart, [list(v) for v in vectors], point)
    else:
        g_frame = FrameDistribution(chart, hint.fields, None, point)
        block = g_frame.matrix_at(point).T * omega.form.matrix_at(point) * g_frame.matrix_at(point)
        if len(g_frame) != omega.dim - len(f_frame) or block.det() == 0:
            raise DegenerateFormError(f"omega is degenerate on the hint {hint.to_text()}")
    return Polarization(omega, f_frame, g_frame)


def adapted_frame_matrix(polarization: Polarization) -> Matrix:
    """Constant change of frame ``A = [G | F]``; the dual coframe is the rows of ``A^-1``.

    The F rows of ``A^-1`` are the 1-forms ``eps^a`` with ``eps^a(G) = 0`` and ``eps^a(f_b) = delta``.
    """
    if not (polarization.f_frame.is_constant and polarization.g_frame.is_constant):
        raise ValueError("Adapted frames need constant F- and G-frames; supply an adapted chart instead")
    return polarization.basis_at(polarization.base_point)


def _fiber_names(polarization: Polarization) -> tuple[str, ...]:
    chart = polarization.chart
    names = []
    for a, v in enumerate(polarization.f_frame.fields):
        coords = [i for i, c in enumerate(v.components()) if c]
        name = chart.coord_names[coords[0]] if len(coords) == 1 and v.is_constant else ""
        candidate = f"p{name[1:]}" if name.startswith("x") and name[1:].isdigit() else f"p{a + 1}"
        names.append(candidate)
    if len(set(names)) != len(names) or set(names) & set(chart.coord_names):
        names = [f"p_{a + 1}" for a in range(len(names))]
    return tuple(names)


def gotay_form(
    polarization: Polarization, fiber_order: int, base_order: int | None = None
) -> FormField:
    """``pi^* omega - d(theta_G)`` on the split chart ``(x, p)``, ``theta_G = sum_a p_a eps^a``."""
    if fiber_order < 0:
        raise ValueError("fiber_order must be non-negative")
    omega = polarization.omega
    base = omega.chart
    m = polarization.nullity
    names = _fiber_names(polarization)
    total = base.with_fibers(names)
    projection = PolyMap.projection(total, base, base.base_indices)
    if m == 0:
        return omega
    pulled = pullback(projection, omega.form)

    coframe = adapted_frame_matrix(polarization).inv()
    theta = DiffForm.zero(total, 1)
    for a in range(m):
        row = coframe.row(len(polarization.g_frame) + a)
        p_a = total.gens[base.dim + a]
        theta = theta + DiffForm(total, 1, {(i,): total.constant(row[i]) * p_a for i in range(base.dim)})
    form = pulled - exterior_d(theta)
    order = JetOrder(max(base_order if base_order is not None else omega.form.poly_degree, 0), fiber_order)
    truncated = form.truncated(order)
    # nothing dropped: keep the form exact so brackets do not spend accuracy
    result = FormField(form if truncated == form else truncated)

    zero_section = tuple(polarization.base_point) + (0,) * m
    if result.form.matrix_at(zero_section).det() == 0:
        raise DegenerateFormError("Gotay form is degenerate on the zero section")
    logger.debug(f"Gotay form: {result.to_text()}")
    return result


class VirtualDimension(BaseModel):
    dim_before: int
    rank_before: int
    dim_after: int
    rank_after: int
    before: int
    after: int


def stabilize(polarization: Polarization, k: int) -> tuple[Polarization, VirtualDimension]:
    """Presymplectic thickening ``(U x R^k, pi_1^* omega)``.

    The kernel grows by the ``R^k`` directions and ``G`` becomes ``G x R^k``, so the count
    ``(dim U + k) - (rank G + k)`` adds ``k`` to both sides. The record is read off the
    returned polarization.
    """
    if k < 0:
        raise ValueError("Stabilization needs k >= 0")
    if k == 0:
        return polarization, _virtual_dimension(polarization, polarization)

    chart = polarization.chart
    extra = [f"s{i + 1}" for i in range(k)]
    while set(extra) & set(chart.coord_names):
        extra = [f"{name}_" for name in extra]
    thick = chart.extended(extra)
    projection = PolyMap.projection(thick, chart, range(chart.dim))
    omega = FormField(pullback(projection, polarization.omega.form))
    point = tuple(polarization.base_point) + (0,) * k

    def lift(v: MultiVector) -> MultiVector:
        return MultiVector.vector(thick, [projection.pull_scalar(c) for c in v.components()] + [0] * k)

    f_frame = FrameDistribution(
        thick,
        tuple(lift(v) for v in polarization.f_frame.fields)
        + tuple(MultiVector.coordinate_vector(thick, chart.dim + i) for i in range(k)),
        None,
        point,
    )
    g_frame = FrameDistribution(thick, tuple(lift(v) for v in polarization.g_frame.fields), None, point)
    stabilized = Polarization(omega, f_frame, g_frame, thickening=polarization.thickening + k)
    record = _virtual_dimension(polarization, stabilized)
    if record.before != record.after:
        raise AssertionError(f"Virtual dimension changed: {record.before} -> {record.after}")
    logger.debug(f"Stabilized by R^{k}: dim {record.dim_after}, rank G {record.rank_after}, vir.dim {record.after}")
    return stabilized, record


def _virtual_dimension(before: Polarization, after: Polarization) -> VirtualDimension:
    return VirtualDimension(
        dim_before=before.omega.dim,
        rank_before=before.g_rank,
        dim_after=after.omega.dim,
        rank_after=after.g_rank,
        before=before.virtual_dim,
        after=after.virtual_dim,
    )
