"""Stratum census of a closed 2-form on a box: the data behind the "nice form" verdict."""

import logging
from fractions import Fraction

import numpy as np
from pydantic import BaseModel
from sklearn.decomposition import PCA
from sympy import Rational

from presymplectic_strata.core.config import LOGGER_NAME, NumericSettings, SamplingSettings
from presymplectic_strata.services.algebra.skew import nullity_admissible, stratum_codim
from presymplectic_strata.services.geometry.stratify import (
    Box,
    DefiningSystem,
    FormField,
    StratumSampleSet,
    numeric_nullity,
    pointwise_nullity,
    stratum_sample,
    transversality_check,
)

logger = logging.getLogger(LOGGER_NAME)

SNAP_DENOMINATOR = 10**6
VARIANCE_FLOOR = 1e-8


class StratumCensus(BaseModel):
    m: int
    count: int
    requested: int
    expected_dim: int
    measured_dims: list[int]
    admissible: bool
    transversal_points: int
    checked_points: int
    notice: str | None = None

    @property
    def local_dim(self) -> int | None:
        if not self.measured_dims:
            return None
        return max(set(self.measured_dims), key=self.measured_dims.count)


class FrontierRecord(BaseModel):
    sampled: int
    closure_of: int
    checked: int
    adherent: int


class NicenessReport(BaseModel):
    dimension: int
    strata: list[StratumCensus]
    frontiers: list[FrontierRecord]
    warnings: list[str]
    nice: bool


def snap_point(point, max_denominator: int = SNAP_DENOMINATOR) -> tuple[Rational, ...]:
    return tuple(
        Rational(f.numerator, f.denominator)
        for f in (Fraction(float(c)).limit_denominator(max_denominator) for c in point)
    )


def local_dimension(
    omega: FormField,
    m: int,
    point: np.ndarray,
    rng: np.random.Generator,
    numeric: NumericSettings,
    sampling: SamplingSettings,
) -> int | None:
    """PCA rank of a cloud of nearby stratum points obtained by perturb-and-project."""
    system = DefiningSystem(omega, m)
    cloud = []
    for _ in range(sampling.pca_neighbors):
        probe = point + sampling.pca_radius * rng.normal(size=len(point))
        x, residual = system.project(probe, numeric)
        if residual > 1e-10:
            continue
        rank = numeric_nullity(omega.matrix_at_float(x), numeric.gap_factor, numeric.zero_floor)
        if not rank.indeterminate and rank.nullity == m:
            cloud.append(x)
    if len(cloud) <= len(point):
        return None
    pca = PCA().fit(np.array(cloud))
    ratios = pca.explained_variance_ratio_
    return int(np.sum(ratios > VARIANCE_FLOOR))


def _frontier(
    omega: FormField,
    sampled: StratumSampleSet,
    closure_of: int,
    rng: np.random.Generator,
    numeric: NumericSettings,
    radius: float,
    probes: int = 8,
) -> FrontierRecord:
    """Samples of ``Y_{m+2}`` lying in the closure of ``Y_m``: some nearby perturbation has nullity ``m``."""
    adherent = 0
    for sample in sampled.samples:
        x = np.array(sample.point)
        for _ in range(probes):
            probe = x + radius * rng.normal(size=len(x))
            rank = numeric_nullity(omega.matrix_at_float(probe), numeric.gap_factor, numeric.zero_floor)
            if not rank.indeterminate and rank.nullity == closure_of:
                adherent += 1
                break
    return FrontierRecord(
        sampled=sampled.nullity, closure_of=closure_of, checked=len(sampled.samples), adherent=adherent
    )


def niceness_report(
    omega: FormField,
    box: Box,
    samples: int,
    seed: int,
    numeric: NumericSettings | None = None,
    sampling: SamplingSettings | None = None,
    transversality_points: int | None = None,
) -> NicenessReport:
    numeric = numeric or NumericSettings()
    sampling = sampling or SamplingSettings()
    n = omega.dim
    rng = np.random.default_rng(seed)
    warnings: list[str] = []
    strata: list[StratumCensus] = []
    sets: dict[int, StratumSampleSet] = {}

    for m in range(n % 2, n + 1, 2):
        found = stratum_sample(omega, m, box, samples, seed + m, numeric, sampling)
        if not found.samples:
            continue
        sets[m] = found
        if found.notice:
            warnings.append(found.notice)
        dims = []
        for sample in found.samples[: min(5, len(found.samples))]:
            dim = local_dimension(omega, m, np.array(sample.point), rng, numeric, sampling)
            if dim is not None:
                dims.append(dim)

        checked = transversal = 0
        limit = transversality_points or len(found.samples)
        for sample in found.samples[:limit]:
            point = snap_point(sample.point)
            if pointwise_nullity(omega, point) != m:
                logger.debug(f"Snapped point {point} left stratum m={m}")
                continue
            checked += 1
            transversal += transversality_check(omega, point).transversal

        strata.append(
            StratumCensus(
                m=m,
                count=len(found.samples),
                requested=found.requested,
                expected_dim=n - stratum_codim(n, m),
                measured_dims=dims,
                admissible=nullity_admissible(n, m),
                transversal_points=transversal,
                checked_points=checked,
                notice=found.notice,
            )
        )
        logger.info(f"Stratum m={m}: {len(found.samples)} samples, local dims {dims}")

    frontiers = []
    for m, sampled in sets.items():
        if m - 2 in sets:
            frontiers.append(_frontier(omega, sampled, m - 2, rng, numeric, sampling.pca_radius))

    nice = all(
        s.admissible
        and s.checked_points > 0
        and s.transversal_points == s.checked_points
        and s.local_dim == s.expected_dim
        for s in strata
    ) and all(f.adherent == f.checked for f in frontiers)
    for s in strata:
        if not s.admissible:
            warnings.append(f"Stratum m={s.m} is inadmissible: codim {stratum_codim(n, s.m)} > {n}")
    return NicenessReport(dimension=n, strata=strata, frontiers=frontiers, warnings=warnings, nice=nice)
