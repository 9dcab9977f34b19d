"""Generalized Jacobi identities of derived-bracket structures."""

import logging
from collections.abc import Iterator, Sequence
from itertools import combinations

import numpy as np
from pydantic import BaseModel

from presymplectic_strata.core.config import LOGGER_NAME
from presymplectic_strata.errors import AccuracyExhaustedError
from presymplectic_strata.services.algebra.fields import MultiVector
from presymplectic_strata.services.linf.vdata import AbelianElement, LinfStructure, settle

logger = logging.getLogger(LOGGER_NAME)


def shifted_degree(a: MultiVector) -> int:
    return a.degree - 1


def koszul_sign(degrees: Sequence[int], first: Sequence[int]) -> int:
    """Sign of moving the positions ``first`` to the front, keeping both blocks in order."""
    chosen = set(first)
    sign = 1
    for s in first:
        for r in range(s):
            if r not in chosen and degrees[r] % 2 and degrees[s] % 2:
                sign = -sign
    return sign


def unshuffles(n: int, i: int) -> Iterator[tuple[tuple[int, ...], tuple[int, ...]]]:
    """``(i, n - i)``-unshuffles as (front, rest) position tuples."""
    for front in combinations(range(n), i):
        yield front, tuple(r for r in range(n) if r not in front)


def jacobi_defect(structure: LinfStructure, args: Sequence[AbelianElement]) -> AbelianElement:
    """``sum_{i+j=n+1} sum_sigma eps(sigma) l_j(l_i(a_sigma(1..i)), a_sigma(i+1..n))``."""
    n = len(args)
    degrees = [shifted_degree(a) for a in args]
    total = None
    for i in range(0, n + 1):
        for front, rest in unshuffles(n, i):
            inner = structure.bracket(*(args[k] for k in front))
            if i == 0 and inner.is_zero:
                continue
            term = structure.bracket(inner, *(args[k] for k in rest))
            term = term * koszul_sign(degrees, front)
            total = term if total is None else total + term
    if total is None:
        return MultiVector.zero(structure.chart, max(sum(degrees) + 3, 0))
    return settle(total)


class IdentityCheck(BaseModel):
    arity: int
    trial: int
    arguments: list[str]
    holds: bool
    defect: str
    jacobiator: str | None = None
    jacobiator_matches: bool | None = None


class LinfReport(BaseModel):
    max_arity: int
    trials: int
    seed: int
    sign: int
    strict: bool
    checks: list[IdentityCheck] = []
    exhausted_at: int | None = None

    @property
    def passed(self) -> bool:
        return all(c.holds and c.jacobiator_matches is not False for c in self.checks)

    @property
    def first_failure(self) -> IdentityCheck | None:
        return next((c for c in self.checks if not c.holds or c.jacobiator_matches is False), None)

    @property
    def failing_arity(self) -> int | None:
        failure = self.first_failure
        return failure.arity if failure else None


def _generator_tuple(structure: LinfStructure, arity: int) -> list[AbelianElement]:
    vdata = structure.vdata
    n = vdata.base_dim
    return [vdata.coordinate_function(k % n) for k in range(arity)]


def linf_verify(structure: LinfStructure, max_arity: int = 4, trials: int = 3, seed: int = 0) -> LinfReport:
    """Check the Jacobi identities up to ``max_arity`` on coordinate functions and random elements.

    Without extra curvature the defect is also compared with the derived brackets of ``1/2 [P, P]``.
    Arities beyond the tracked accuracy are skipped and reported in ``exhausted_at``.
    """
    if max_arity < 1:
        raise ValueError("max_arity must be at least 1")
    vdata = structure.vdata
    rng = np.random.default_rng(seed)
    report = LinfReport(
        max_arity=max_arity,
        trials=trials,
        seed=seed,
        sign=vdata.sign,
        strict=strictness_check(structure),
    )
    compare_jacobiator = structure.curvature is None
    for arity in range(1, max_arity + 1):
        samples = [_generator_tuple(structure, arity)]
        samples += [[vdata.random_element(rng) for _ in range(arity)] for _ in range(trials)]
        try:
            for trial, args in enumerate(samples):
                defect = jacobi_defect(structure, args)
                check = IdentityCheck(
                    arity=arity,
                    trial=trial,
                    arguments=[a.to_text() for a in args],
                    holds=defect.is_zero,
                    defect=defect.to_text(),
                )
                if compare_jacobiator:
                    direct = structure.jacobiator(*args)
                    check.jacobiator = direct.to_text()
                    check.jacobiator_matches = _agree(direct, defect)
                report.checks.append(check)
                logger.debug(f"Jacobi identity arity {arity} trial {trial}: defect {check.defect}")
        except AccuracyExhaustedError as exc:
            report.exhausted_at = arity
            logger.warning(f"Jacobi identities of arity >= {arity} skipped: {exc}")
            break
    failure = report.first_failure
    if failure is not None:
        logger.warning(
            f"Jacobi identity of arity {failure.arity} fails on {failure.arguments}: defect {failure.defect}"
        )
    return report


def _agree(a: MultiVector, b: MultiVector) -> bool:
    if a.is_zero and b.is_zero:
        return True
    accuracy = a.accuracy.meet(b.accuracy) if a.accuracy is not None else b.accuracy
    if accuracy is None:
        return a == b
    return (a - b).truncated(accuracy).is_zero


def strictness_check(structure: LinfStructure) -> bool:
    """``l_0 = 0`` and ``l_1 = d_F`` on the coordinate functions and their foliation differentials."""
    if not structure.strict_candidate:
        return False
    vdata = structure.vdata
    if not structure.bracket().is_zero:
        return False
    for i in range(vdata.base_dim):
        x = vdata.coordinate_function(i)
        dx = vdata.foliation_differential(x)
        try:
            if not _agree(structure.bracket(x), dx) or not structure.bracket(dx).is_zero:
                return False
        except AccuracyExhaustedError:
            logger.warning("Strictness check ran out of accuracy")
            return False
    return True


class BracketRow(BaseModel):
    arity: int
    arguments: list[str]
    value: str


def bracket_table(structure: LinfStructure, max_arity: int = 2) -> list[BracketRow]:
    """Brackets of the coordinate functions up to ``max_arity``, for reports."""
    vdata = structure.vdata
    generators = [vdata.coordinate_function(i) for i in range(vdata.base_dim)]
    rows = [BracketRow(arity=0, arguments=[], value=structure.bracket().to_text())]
    for arity in range(1, max_arity + 1):
        for args in combinations(generators, arity):
            try:
                value = structure.bracket(*args)
            except AccuracyExhaustedError:
                return rows
            rows.append(BracketRow(arity=arity, arguments=[a.to_text() for a in args], value=value.to_text()))
    return rows
