"""Connections making a closed 2-form parallel at a point.

Starting from the Levi-Civita connection of a polynomial metric, the correction ``B`` solves

    (nabla_k omega)_ij = B_ki^l omega_lj + B_kj^l omega_il        at x

for each ``k``. In a basis ``[C | K]`` with ``K`` spanning ``ker omega_x`` the right-hand side
ranges over the skew forms vanishing on ``K x K``; that block is the obstruction and is
returned as the residual. The remaining system is solved with the least-norm solution.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

from pydantic import BaseModel, Field
from sympy import Matrix, Rational

from presymplectic_strata.core.config import LOGGER_NAME
from presymplectic_strata.services.algebra.polynomials import coerce_poly, evaluate, to_rational
from presymplectic_strata.services.geometry.stratify import FormField

logger = logging.getLogger(LOGGER_NAME)

Tensor3 = list[Matrix]


class CutoffSpec(BaseModel):
    """Radii of the bump function gluing the correction to the base connection; only recorded."""

    inner_radius: float = Field(default=0.5, gt=0)
    outer_radius: float = Field(default=1.0, gt=0)


@dataclass(frozen=True)
class ConnectionRecord:
    point: tuple[Rational, ...]
    christoffel: Tensor3
    correction: Tensor3
    covariant: Tensor3
    kernel_dim: int
    kernel_block: Tensor3
    off_kernel_block: Tensor3
    cutoff: CutoffSpec

    @property
    def residual(self) -> Tensor3:
        """Achieved ``nabla omega`` at the point: the part no correction can remove."""
        return self.covariant

    @property
    def parallel(self) -> bool:
        return all(r.is_zero_matrix for r in self.covariant)

    @property
    def obstruction_on_kernel_only(self) -> bool:
        return all(r.is_zero_matrix for r in self.off_kernel_block)


def _christoffel(metric: Sequence[Sequence[Any]], omega: FormField, x: Sequence[Rational]) -> Tensor3:
    """``Gamma[k][l, i] = Gamma^l_{ki}`` at ``x``."""
    chart = omega.chart
    n = chart.dim
    g = [[coerce_poly(chart, metric[i][j]) for j in range(n)] for i in range(n)]
    g_x = Matrix(n, n, lambda i, j: evaluate(g[i][j], x))
    if not g_x.is_symmetric() or not g_x.is_positive_definite:
        raise ValueError("Metric must be symmetric positive definite at the point")
    g_inv = g_x.inv()
    gens = chart.gens
    dg = [Matrix(n, n, lambda i, j: evaluate(g[i][j].diff(gens[k]), x)) for k in range(n)]
    gamma = []
    for k in range(n):
        lower = Matrix(n, n, lambda j, i: (dg[k][j, i] + dg[i][j, k] - dg[j][k, i]) / 2)
        gamma.append(g_inv * lower)
    return gamma


def _least_norm(system: Matrix, rhs: Matrix) -> Matrix:
    if system.rows == 0 or rhs.is_zero_matrix:
        return Matrix.zeros(system.cols, 1)
    return system.pinv() * rhs


def special_connection(
    omega: FormField,
    x: Sequence[Any],
    metric: Sequence[Sequence[Any]] | None = None,
    cutoff: CutoffSpec | None = None,
) -> ConnectionRecord:
    chart = omega.chart
    n = chart.dim
    point = tuple(to_rational(c) for c in x)
    metric = metric if metric is not None else [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    gamma = _christoffel(metric, omega, point)

    w = omega.form.matrix_at(point)
    gens = chart.gens
    covariant_base = []
    for k in range(n):
        dw = Matrix(n, n, lambda i, j: evaluate(omega.form.entry(i, j).diff(gens[k]), point))
        covariant_base.append(dw - gamma[k].T * w - w * gamma[k])

    kernel = w.nullspace()
    m = len(kernel)
    g_x = Matrix(n, n, lambda i, j: evaluate(coerce_poly(chart, metric[i][j]), point))
    if m:
        k_matrix = Matrix.hstack(*kernel)
        complement = (k_matrix.T * g_x).nullspace()
        p = Matrix.hstack(*complement, k_matrix) if complement else k_matrix
    else:
        p = Matrix.eye(n)
    p_inv = p.inv()
    w_adapted = p.T * w * p
    r = n - m

    # unknowns: the n x n entries of X' row-major; equations: entries i < j of X'^T W' + W' X'
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if i < r or j < r]
    system = Matrix.zeros(len(pairs), n * n)
    for row, (i, j) in enumerate(pairs):
        for a in range(n):
            for b in range(n):
                # (X'^T W')_ij = sum_l X'_li W'_lj ; (W' X')_ij = sum_l W'_il X'_lj
                if b == i:
                    system[row, a * n + b] += w_adapted[a, j]
                if b == j:
                    system[row, a * n + b] += w_adapted[i, a]

    correction, covariant = [], []
    for k in range(n):
        target = p.T * covariant_base[k] * p
        rhs = Matrix([target[i, j] for i, j in pairs])
        solution = _least_norm(system, rhs)
        x_adapted = Matrix(n, n, lambda a, b: solution[a * n + b])
        x_k = p * x_adapted * p_inv
        correction.append(x_k)
        achieved = covariant_base[k] - x_k.T * w - w * x_k
        covariant.append(achieved)

    # derivative index in the adapted basis as well
    adapted_residual = [
        p.T * sum((p[kk, k] * covariant[kk] for kk in range(n)), Matrix.zeros(n, n)) * p
        for k in range(n)
    ]
    kernel_block, off_kernel = [], []
    for k, res in enumerate(adapted_residual):
        on = Matrix(n, n, lambda i, j: res[i, j] if k >= r and i >= r and j >= r else 0)
        kernel_block.append(on)
        off_kernel.append(res - on)

    record = ConnectionRecord(
        point=point,
        christoffel=gamma,
        correction=correction,
        covariant=covariant,
        kernel_dim=m,
        kernel_block=kernel_block,
        off_kernel_block=off_kernel,
        cutoff=cutoff or CutoffSpec(),
    )
    if not record.parallel:
        logger.warning(f"Connection obstruction at {point}: kernel block of dimension {m} is not parallel")
    return record
