"""Numerical Whitney A/B checks between two strata.

For pairs of sequences ``x_i -> y`` in the higher stratum and ``y_i -> y`` in the lower
one, at rates ``t_i = 2^-i``, the gaps

* A: ``|(I - P_tau) T_y S_lower|``, the lower tangent plane against ``tau = T_{x_i} S_higher``;
* B: ``|(I - P_tau) l_i|``, the secant line ``l_i = [x_i - y_i]`` against ``tau``;

are extrapolated with one Richardson step over the last iterates. A verdict is PASS when
every limit is below the tolerance, FAIL with a witness when one exceeds ten times it.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np
from pydantic import BaseModel

from presymplectic_strata.core.config import LOGGER_NAME, NumericSettings, WhitneySettings
from presymplectic_strata.services.algebra.polynomials import evaluate_float
from presymplectic_strata.services.algebra.skew import stratum_codim
from presymplectic_strata.services.geometry.stratify import (
    DefiningSystem,
    FormField,
    numeric_nullity,
)

logger = logging.getLogger(LOGGER_NAME)

PointFn = Callable[[float], np.ndarray]


class Verdict(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"


def _orthonormal(vectors: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal basis of the span of the columns, keeping the ``dim`` leading directions."""
    if dim == 0 or vectors.size == 0:
        return np.zeros((vectors.shape[0], 0))
    u, _, _ = np.linalg.svd(vectors, full_matrices=False)
    return u[:, :dim]


def _numeric_jacobian(fn: Callable[[np.ndarray], np.ndarray], u: np.ndarray, h: float = 1e-6) -> np.ndarray:
    cols = []
    for k in range(len(u)):
        e = np.zeros(len(u))
        e[k] = h
        cols.append((fn(u + e) - fn(u - e)) / (2 * h))
    return np.array(cols).T


@dataclass(frozen=True)
class ParametrizedStratum:
    """Explicit stratum ``u -> phi(u)`` of dimension ``dim``; the Jacobian defaults to central differences."""

    name: str
    dim: int
    param: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None

    def point(self, u: Sequence[float]) -> np.ndarray:
        return np.asarray(self.param(np.asarray(u, dtype=float)), dtype=float)

    def tangent_at(self, u: Sequence[float]) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        jac = self.jacobian(u) if self.jacobian else _numeric_jacobian(self.param, u)
        return _orthonormal(np.asarray(jac, dtype=float), self.dim)


@dataclass(frozen=True)
class ImplicitStratum:
    """Nullity stratum ``Y_m`` of a form field, tangent planes from kernel-pairing defining functions."""

    omega: FormField
    m: int

    @property
    def name(self) -> str:
        return f"Y_{self.m}"

    @property
    def codim(self) -> int:
        return stratum_codim(self.omega.dim, self.m)

    @property
    def dim(self) -> int:
        return self.omega.dim - self.codim

    def tangent_at_point(self, x: np.ndarray) -> np.ndarray:
        n = self.omega.dim
        if self.codim == 0:
            return np.eye(n)
        matrix = self.omega.matrix_at_float(x)
        _, _, vh = np.linalg.svd(matrix)
        kernel = vh[-self.m :].T
        gens = self.omega.chart.gens
        derivatives = [
            np.array([[evaluate_float(self.omega.form.entry(a, b).diff(g), x) for b in range(n)] for a in range(n)])
            for g in gens
        ]
        rows = []
        for i in range(self.m):
            for j in range(i + 1, self.m):
                rows.append([kernel[:, i] @ dk @ kernel[:, j] for dk in derivatives])
        _, _, vh = np.linalg.svd(np.array(rows))
        return vh[self.codim :].T


class SequenceRecord(BaseModel):
    index: int
    secant: list[float]
    gaps_a: list[float]
    gaps_b: list[float]
    limit_a: float
    limit_b: float
    verdict_a: Verdict
    verdict_b: Verdict


class WhitneyReport(BaseModel):
    higher: str
    lower: str | None
    base_point: list[float]
    tolerance: float
    sequences: list[SequenceRecord]
    condition_a: Verdict
    condition_b: Verdict
    witness: int | None = None


def _gap(tau: np.ndarray, vectors: np.ndarray) -> float:
    if vectors.size == 0:
        return 0.0
    residual = vectors - tau @ (tau.T @ vectors)
    return float(np.linalg.norm(residual, 2))


def richardson_limit(gaps: Sequence[float]) -> float:
    """One Richardson step ``2 g_{i+1} - g_i`` on the last iterates of a rate-1/2 sequence."""
    if len(gaps) < 3:
        return float(gaps[-1])
    estimates = (2 * gaps[-1] - gaps[-2], 2 * gaps[-2] - gaps[-3])
    return float(max(abs(e) for e in estimates))


def _verdict(limit: float, tol: float) -> Verdict:
    if limit < tol:
        return Verdict.PASS
    if limit > 10 * tol:
        return Verdict.FAIL
    return Verdict.INCONCLUSIVE


def _combine(verdicts: Sequence[Verdict]) -> Verdict:
    if any(v is Verdict.FAIL for v in verdicts):
        return Verdict.FAIL
    if all(v is Verdict.PASS for v in verdicts):
        return Verdict.PASS
    return Verdict.INCONCLUSIVE


@dataclass(frozen=True)
class ApproachSequence:
    """Approach to the base point: ``higher(t)`` is a parameter ``u(t)`` for explicit higher
    strata and a point ``x(t)`` for implicit ones; ``lower_point(t)`` lies in the lower stratum.
    """

    higher: PointFn
    lower_point: PointFn


def whitney_check(
    higher: ParametrizedStratum | ImplicitStratum | None,
    lower: ParametrizedStratum | ImplicitStratum | None,
    base_point: Sequence[float],
    lower_tangent: np.ndarray | None = None,
    sequences: Sequence[ApproachSequence] | None = None,
    settings: WhitneySettings | None = None,
    numeric: NumericSettings | None = None,
    seed: int = 0,
) -> WhitneyReport:
    settings = settings or WhitneySettings()
    numeric = numeric or NumericSettings()
    y = np.asarray(base_point, dtype=float)
    tol = settings.tolerance
    if higher is None or lower is None:
        only = higher or lower
        return WhitneyReport(
            higher=only.name if only else "",
            lower=None,
            base_point=y.tolist(),
            tolerance=tol,
            sequences=[],
            condition_a=Verdict.PASS,
            condition_b=Verdict.PASS,
        )

    if lower_tangent is None:
        if isinstance(lower, ImplicitStratum):
            lower_tangent = lower.tangent_at_point(y)
        else:
            raise ValueError("An explicit lower stratum needs its tangent plane at the base point")
    if sequences is None:
        if not isinstance(higher, ImplicitStratum) or not isinstance(lower, ImplicitStratum):
            raise ValueError("Approach sequences are required for explicit strata")
        sequences = implicit_sequences(higher, lower, y, settings.sequences, numeric, seed)

    records = []
    for k, seq in enumerate(sequences):
        gaps_a, gaps_b, secant = [], [], None
        for i in range(1, settings.sequence_length + 1):
            t = 2.0**-i
            if isinstance(higher, ParametrizedStratum):
                u = seq.higher(t)
                x = higher.point(u)
                tau = higher.tangent_at(u)
            else:
                x = seq.higher(t)
                tau = higher.tangent_at_point(x)
            yi = seq.lower_point(t)
            d = x - yi
            norm = np.linalg.norm(d)
            ell = d / norm if norm > 0 else np.zeros_like(d)
            secant = ell
            gaps_a.append(_gap(tau, lower_tangent))
            gaps_b.append(_gap(tau, ell.reshape(-1, 1)))
        limit_a, limit_b = richardson_limit(gaps_a), richardson_limit(gaps_b)
        records.append(
            SequenceRecord(
                index=k,
                secant=[float(c) for c in secant],
                gaps_a=gaps_a,
                gaps_b=gaps_b,
                limit_a=limit_a,
                limit_b=limit_b,
                verdict_a=_verdict(limit_a, tol),
                verdict_b=_verdict(limit_b, tol),
            )
        )

    condition_a = _combine([r.verdict_a for r in records])
    condition_b = _combine([r.verdict_b for r in records])
    witness = next(
        (r.index for r in records if Verdict.FAIL in (r.verdict_a, r.verdict_b)), None
    )
    for verdict, label in ((condition_a, "A"), (condition_b, "B")):
        if verdict is Verdict.INCONCLUSIVE:
            logger.warning(f"Whitney condition {label} inconclusive for ({higher.name}, {lower.name})")
    return WhitneyReport(
        higher=higher.name,
        lower=lower.name,
        base_point=y.tolist(),
        tolerance=tol,
        sequences=records,
        condition_a=condition_a,
        condition_b=condition_b,
        witness=witness,
    )


def implicit_sequences(
    higher: ImplicitStratum,
    lower: ImplicitStratum,
    y: np.ndarray,
    count: int,
    numeric: NumericSettings,
    seed: int,
) -> list[ApproachSequence]:
    """Random radial approaches to ``y``: ``x(t)`` projected onto the higher locus, ``y(t)`` onto the lower one."""
    rng = np.random.default_rng(seed)
    high_system = DefiningSystem(higher.omega, higher.m)
    low_system = DefiningSystem(lower.omega, lower.m)
    sequences = []
    attempts = 0
    while len(sequences) < count and attempts < 50 * count:
        attempts += 1
        direction = rng.normal(size=len(y))
        direction /= np.linalg.norm(direction)
        probe, _ = high_system.project(y + 0.5 * direction, numeric)
        rank = numeric_nullity(higher.omega.matrix_at_float(probe), numeric.gap_factor, numeric.zero_floor)
        if rank.indeterminate or rank.nullity != higher.m:
            continue

        def higher_point(t, u=direction):
            x, _ = high_system.project(y + t * u, numeric)
            return x

        def lower_point(t, u=direction):
            x, _ = low_system.project(y + t * u, numeric)
            return x

        sequences.append(ApproachSequence(higher_point, lower_point))
    return sequences


def cusp_family() -> tuple[ParametrizedStratum, ParametrizedStratum, np.ndarray, list[ApproachSequence]]:
    """Smooth part and t-axis of ``y^2 = x^3 + t^2 x^2``, approached along ``u = 0``.

    The smooth part is ``(u, t) -> (u^2 - t^2, u(u^2 - t^2), t)``; its tangent planes along
    ``u = 0`` tend to ``span(e_y, e_t)`` while the secants point along ``e_x``, so Condition B
    fails at the origin.
    """

    def smooth(p: np.ndarray) -> np.ndarray:
        u, t = p
        return np.array([u**2 - t**2, u * (u**2 - t**2), t])

    def smooth_jacobian(p: np.ndarray) -> np.ndarray:
        u, t = p
        return np.array([[2 * u, -2 * t], [3 * u**2 - t**2, -2 * u * t], [0.0, 1.0]])

    higher = ParametrizedStratum("cusp smooth part", 2, smooth, smooth_jacobian)
    lower = ParametrizedStratum(
        "t-axis", 1, lambda p: np.array([0.0, 0.0, p[0]]), lambda p: np.array([[0.0], [0.0], [1.0]])
    )
    sequences = [
        ApproachSequence(lambda t: np.array([0.0, t]), lambda t: np.array([0.0, 0.0, t])),
        ApproachSequence(lambda t: np.array([0.0, -t]), lambda t: np.array([0.0, 0.0, -t])),
    ]
    return higher, lower, np.array([[0.0], [0.0], [1.0]]), sequences
