"""Pointwise nullity stratification of a closed 2-form field.

Exact decisions use sympy over the rationals; numeric decisions use numpy singular values
with a gap rule: the rank is accepted only where consecutive singular values drop by at
least ``gap_factor`` and nowhere else.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel
from sympy import Matrix, Rational

from presymplectic_strata.core.config import LOGGER_NAME, NumericSettings, SamplingSettings
from presymplectic_strata.errors import IndeterminateRankError, NotClosedError
from presymplectic_strata.services.algebra.fields import DiffForm, exterior_d
from presymplectic_strata.services.algebra.polynomials import (
    Chart,
    evaluate,
    evaluate_float,
    to_rational,
)
from presymplectic_strata.services.algebra.skew import (
    SkewForm,
    pfaffian_of,
    stratum_codim,
)
from presymplectic_strata.utils.rng import worker_streams

logger = logging.getLogger(LOGGER_NAME)

Box = tuple[tuple[Rational, Rational], ...]


@dataclass(frozen=True, eq=False)
class FormField:
    """Closed 2-form with polynomial coefficients on a chart."""

    form: DiffForm

    def __post_init__(self):
        if self.form.degree != 2:
            raise ValueError(f"A form field has degree 2, got {self.form.degree}")
        d_form = exterior_d(self.form)
        if not d_form.is_zero:
            raise NotClosedError(f"Form is not closed: d(omega) = {d_form.to_text()}")

    @property
    def chart(self) -> Chart:
        return self.form.chart

    @property
    def dim(self) -> int:
        return self.form.chart.dim

    def skew_at(self, point: Sequence[Any]) -> SkewForm:
        return SkewForm(self.form.matrix_at(point).as_immutable())

    def matrix_at_float(self, point: Sequence[float]) -> np.ndarray:
        return self.form.matrix_at_float(point)

    def to_text(self) -> str:
        return self.form.to_text()


@dataclass(frozen=True)
class NumericRank:
    nullity: int
    ratio: float
    singular_values: tuple[float, ...]
    indeterminate: bool


def numeric_nullity(
    matrix: np.ndarray, gap_factor: float = 1e6, zero_floor: float = 1e-12
) -> NumericRank:
    """Nullity by the largest singular-value gap.

    ``s`` sorted descending is padded with ``s[0] / gap_factor**2`` so that full rank is a
    candidate like any other; the decision is indeterminate when the best ratio is below
    ``gap_factor`` or a second candidate also reaches it.
    """
    n = matrix.shape[0]
    s = np.linalg.svd(matrix, compute_uv=False) if n else np.zeros(0)
    values = tuple(float(v) for v in s)
    if n == 0:
        return NumericRank(0, float("inf"), values, False)
    if s[0] <= zero_floor:
        return NumericRank(n, float("inf"), values, False)
    padded = np.append(s, s[0] / gap_factor**2)
    ratios = padded[:-1] / np.maximum(padded[1:], 1e-300)
    best = int(np.argmax(ratios))
    rank = best + 1
    strong = int(np.sum(ratios >= gap_factor))
    indeterminate = ratios[best] < gap_factor or strong > 1
    return NumericRank(n - rank, float(ratios[best]), values, bool(indeterminate))


def pointwise_nullity(
    omega: FormField,
    point: Sequence[Any],
    mode: Literal["exact", "numeric"] = "exact",
    numeric: NumericSettings | None = None,
) -> int:
    if mode == "exact":
        q = omega.form.matrix_at([to_rational(x) for x in point])
        return omega.dim - q.rank()
    numeric = numeric or NumericSettings()
    result = numeric_nullity(
        omega.matrix_at_float([float(x) for x in point]), numeric.gap_factor, numeric.zero_floor
    )
    if result.indeterminate:
        raise IndeterminateRankError(
            f"No clear singular-value gap at {tuple(point)} (best ratio {result.ratio:.3g})",
            singular_values=result.singular_values,
        )
    return result.nullity


def realize_form_at_point(
    q: SkewForm, x0: Sequence[Any], chart: Chart | None = None
) -> FormField:
    """Closed form ``d(alpha)`` with value ``q`` at ``x0``, from ``alpha_i = -1/2 sum_k Q_ik (x_k - x0_k)``."""
    n = q.n
    chart = chart or Chart(tuple(f"x{i + 1}" for i in range(n)))
    if chart.dim != n:
        raise ValueError(f"Chart dimension {chart.dim} does not match form size {n}")
    gens = chart.gens
    half = Rational(1, 2)
    alpha = {}
    for i in range(n):
        coeff = chart.ring.zero
        for k in range(n):
            if q.entries[i, k] != 0:
                coeff += chart.constant(-half * q.entries[i, k]) * (gens[k] - chart.constant(x0[k]))
        alpha[(i,)] = coeff
    return FormField(exterior_d(DiffForm(chart, 1, alpha)))


class TransversalityReport(BaseModel):
    point: list[str]
    nullity: int
    codim: int
    rank: int
    rank_with_form_variations: int
    transversal: bool


def transversality_check(omega: FormField, point: Sequence[Any]) -> TransversalityReport:
    """Exact rank of the derivative of ``x -> (v_i^T omega_x v_j)_{i<j}`` for a kernel basis at ``point``."""
    x = [to_rational(c) for c in point]
    n = omega.dim
    kernel = omega.form.matrix_at(x).nullspace()
    m = len(kernel)
    codim = stratum_codim(n, m)
    pairs = list(combinations(range(m), 2))
    gens = omega.chart.gens
    gradient = Matrix.zeros(len(pairs), n)
    variations = Matrix.zeros(len(pairs), n * (n - 1) // 2)
    basis_pairs = list(combinations(range(n), 2))
    for row, (i, j) in enumerate(pairs):
        vi, vj = kernel[i], kernel[j]
        for k, g in enumerate(gens):
            dk = Matrix(n, n, lambda a, b: evaluate(omega.form.entry(a, b).diff(g), x))
            gradient[row, k] = (vi.T * dk * vj)[0, 0]
        for col, (a, b) in enumerate(basis_pairs):
            variations[row, col] = vi[a] * vj[b] - vi[b] * vj[a]
    rank = gradient.rank() if pairs else 0
    full_rank = Matrix.hstack(gradient, variations).rank() if pairs else 0
    report = TransversalityReport(
        point=[str(c) for c in x],
        nullity=m,
        codim=codim,
        rank=rank,
        rank_with_form_variations=full_rank,
        transversal=rank == codim,
    )
    logger.debug(f"Transversality at {report.point}: rank {rank} of codim {codim}")
    return report


@dataclass(frozen=True)
class StratumSample:
    point: tuple[float, ...]
    nullity: int
    kernel: np.ndarray = field(repr=False)
    residual: float
    indeterminate: bool = False


@dataclass(frozen=True)
class StratumSampleSet:
    nullity: int
    samples: tuple[StratumSample, ...]
    requested: int
    notice: str | None = None

    @property
    def shortfall(self) -> int:
        return self.requested - len(self.samples)

    def points(self) -> np.ndarray:
        return np.array([s.point for s in self.samples])


class DefiningSystem:
    """Principal Pfaffians of size ``N - m + 2``: their common zeros are the points of nullity >= m."""

    def __init__(self, omega: FormField, m: int):
        self.omega = omega
        self.m = m
        n = omega.dim
        size = n - m + 2
        ring = omega.chart.ring
        subsets = list(combinations(range(n), size)) if 2 <= size <= n else []
        polys = [pfaffian_of(omega.form.entry, s, ring.one) for s in subsets]
        self.equations = [p for p in polys if p]
        gens = omega.chart.gens
        self.gradients = [[p.diff(g) for g in gens] for p in self.equations]

    def __len__(self) -> int:
        return len(self.equations)

    def values(self, x: np.ndarray) -> np.ndarray:
        return np.array([evaluate_float(p, x) for p in self.equations])

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return np.array([[evaluate_float(d, x) for d in row] for row in self.gradients])

    def project(self, x: np.ndarray, numeric: NumericSettings) -> tuple[np.ndarray, float]:
        """Damped Gauss-Newton with minimum-norm steps; returns the point and its residual."""
        x = np.array(x, dtype=float)
        if not self.equations:
            return x, 0.0
        f = self.values(x)
        norm = float(np.linalg.norm(f))
        for _ in range(numeric.newton_iterations):
            if norm <= numeric.newton_tolerance:
                break
            step, *_ = np.linalg.lstsq(self.jacobian(x), -f, rcond=None)
            damping = 1.0
            while damping > 1e-6:
                trial = x + damping * step
                f_trial = self.values(trial)
                norm_trial = float(np.linalg.norm(f_trial))
                if norm_trial < norm:
                    x, f, norm = trial, f_trial, norm_trial
                    break
                damping /= 2
            else:
                break
        return x, norm


def _in_box(x: np.ndarray, box: Box) -> bool:
    return all(float(lo) <= xi <= float(hi) for xi, (lo, hi) in zip(x, box))


def _numeric_kernel(matrix: np.ndarray, nullity: int) -> np.ndarray:
    if nullity == 0:
        return np.zeros((matrix.shape[0], 0))
    _, _, vh = np.linalg.svd(matrix)
    return vh[-nullity:].T


def stratum_sample(
    omega: FormField,
    m: int,
    box: Box,
    count: int,
    seed: int,
    numeric: NumericSettings | None = None,
    sampling: SamplingSettings | None = None,
    max_starts: int | None = None,
) -> StratumSampleSet:
    """Random multistart plus Gauss-Newton onto the nullity-``m`` locus, filtered by numeric nullity."""
    numeric = numeric or NumericSettings()
    sampling = sampling or SamplingSettings()
    n = omega.dim
    if len(box) != n:
        raise ValueError(f"Box has {len(box)} intervals for a {n}-dimensional chart")
    if (n - m) % 2 or not 0 <= m <= n:
        notice = f"Stratum m={m} is empty by parity on R^{n}"
        logger.warning(notice)
        return StratumSampleSet(m, (), count, notice)

    system = DefiningSystem(omega, m)
    lows = np.array([float(lo) for lo, _ in box])
    highs = np.array([float(hi) for _, hi in box])
    streams = worker_streams(seed, sampling.workers)
    budget = max_starts or 20 * count
    per_worker = -(-budget // sampling.workers)

    found: list[StratumSample] = []
    for w, rng in enumerate(streams):
        quota = -(-count // sampling.workers)
        kept = 0
        for _ in range(per_worker):
            if kept >= quota:
                break
            start = rng.uniform(lows, highs)
            x, residual = system.project(start, numeric)
            if residual > max(numeric.newton_tolerance, 1e-10) or not _in_box(x, box):
                continue
            matrix = omega.matrix_at_float(x)
            rank = numeric_nullity(matrix, numeric.gap_factor, numeric.zero_floor)
            if rank.indeterminate:
                logger.debug(f"Worker {w}: indeterminate sample at {x}")
                continue
            if rank.nullity != m:
                continue
            found.append(
                StratumSample(tuple(float(c) for c in x), m, _numeric_kernel(matrix, m), rank.ratio)
            )
            kept += 1

    found.sort(key=lambda s: s.point)
    samples = tuple(found[:count])
    notice = None
    if len(samples) < count:
        notice = f"Found {len(samples)} of {count} samples of stratum m={m} in the box"
        logger.warning(notice)
    return StratumSampleSet(m, samples, count, notice)
