"""Exact linear algebra of skew-symmetric bilinear forms.

All arithmetic is over the rationals (sympy ``Rational``); nothing here touches floating
point. A form on ``R^n`` is stored as its Gram matrix ``Q[i, j] = Q(e_i, e_j)``, so the
form ``e1^e2`` has ``Q[0, 1] = 1`` and ``Q[1, 0] = -1``.
"""

import logging
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from typing import Any, TypeVar

import numpy as np
from sympy import ImmutableMatrix, Matrix, Rational, symbols, zeros

from presymplectic_strata.core.config import LOGGER_NAME
from presymplectic_strata.utils.rng import random_rational

logger = logging.getLogger(LOGGER_NAME)

T = TypeVar("T")


def _immutable(rows: Any, n: int | None = None) -> ImmutableMatrix:
    if isinstance(rows, (Matrix, ImmutableMatrix)):
        return ImmutableMatrix(rows.applyfunc(Rational))
    rows = [list(row) for row in rows]
    if not rows:
        return ImmutableMatrix(zeros(n or 0, n or 0))
    return ImmutableMatrix([[Rational(x) for x in row] for row in rows])


@dataclass(frozen=True)
class SkewForm:
    """Exact skew-symmetric bilinear form on ``R^n`` (``n = 0`` is the empty form)."""

    entries: ImmutableMatrix

    def __post_init__(self):
        rows, cols = self.entries.shape
        if rows != cols:
            raise ValueError(f"Skew form must be square, got {rows}x{cols}")
        if self.entries.T != -self.entries:
            raise ValueError("Skew form entries must satisfy Q[i][j] = -Q[j][i]")

    @classmethod
    def from_rows(cls, rows: Any) -> "SkewForm":
        return cls(_immutable(rows))

    @classmethod
    def zero(cls, n: int) -> "SkewForm":
        return cls(ImmutableMatrix(zeros(n, n)))

    @classmethod
    def from_pairs(cls, n: int, pairs: Mapping[tuple[int, int], Any]) -> "SkewForm":
        """Build ``sum q_ij e_i^e_j`` from ``{(i, j): q_ij}`` with 0-based ``i < j``."""
        m = zeros(n, n)
        for (i, j), q in pairs.items():
            if not 0 <= i < j < n:
                raise ValueError(f"Invalid pair {(i, j)} for dimension {n}")
            m[i, j] += Rational(q)
            m[j, i] -= Rational(q)
        return cls(ImmutableMatrix(m))

    @classmethod
    def random(
        cls, n: int, rng: np.random.Generator, nullity: int | None = None
    ) -> "SkewForm":
        """Random rational form; with ``nullity`` given the kernel has exactly that dimension."""
        if nullity is None:
            m = zeros(n, n)
            for i in range(n):
                for j in range(i + 1, n):
                    q = random_rational(rng)
                    m[i, j], m[j, i] = q, -q
            return cls(ImmutableMatrix(m))

        rank = n - nullity
        if nullity < 0 or rank % 2:
            raise ValueError(f"No skew form on R^{n} has nullity {nullity}")
        while True:
            block = cls.random(rank, rng).entries
            lift = Matrix(rank, n, lambda i, j: random_rational(rng))
            if block.det() != 0 and lift.rank() == rank:
                return cls(ImmutableMatrix(lift.T * block * lift))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __call__(self, u: Sequence, v: Sequence) -> Rational:
        return (Matrix(list(u)).T * self.entries * Matrix(list(v)))[0, 0]

    def __add__(self, other: "SkewForm") -> "SkewForm":
        return SkewForm(self.entries + other.entries)

    def scaled(self, factor: Any) -> "SkewForm":
        return SkewForm(self.entries * Rational(factor))

    def restrict(self, basis: "Subspace") -> "SkewForm":
        """Gram matrix of the form on ``basis`` (``B^T Q B``)."""
        b = basis.matrix()
        return SkewForm(ImmutableMatrix(b.T * self.entries * b))


@dataclass(frozen=True)
class Subspace:
    ambient_dim: int
    basis: tuple[ImmutableMatrix, ...]

    def __post_init__(self):
        if len(self.basis) > self.ambient_dim:
            raise ValueError("More basis vectors than the ambient dimension")
        for v in self.basis:
            if v.shape != (self.ambient_dim, 1):
                raise ValueError(f"Basis vector of shape {v.shape} in R^{self.ambient_dim}")
        if self.basis and self.matrix().rank() != len(self.basis):
            raise ValueError("Subspace basis vectors are linearly dependent")

    @classmethod
    def span(cls, ambient_dim: int, vectors: Sequence[Sequence[Any]]) -> "Subspace":
        return cls(ambient_dim, tuple(_immutable([[x] for x in v]) for v in vectors))

    @classmethod
    def full(cls, ambient_dim: int) -> "Subspace":
        eye = Matrix.eye(ambient_dim)
        return cls(ambient_dim, tuple(ImmutableMatrix(eye[:, i]) for i in range(ambient_dim)))

    @property
    def dim(self) -> int:
        return len(self.basis)

    def matrix(self) -> Matrix:
        if not self.basis:
            return zeros(self.ambient_dim, 0)
        return Matrix.hstack(*self.basis)

    def contains(self, vector: Sequence[Any] | Matrix) -> bool:
        v = Matrix(vector) if not isinstance(vector, Matrix) else vector
        if not self.basis:
            return all(x == 0 for x in v)
        return Matrix.hstack(self.matrix(), v).rank() == self.dim

    def contains_subspace(self, other: "Subspace") -> bool:
        return all(self.contains(v) for v in other.basis)


@dataclass(frozen=True)
class StratumId:
    """Nullity stratum ``S_m`` of skew forms on ``R^N``; ``N = m + 2*ell``."""

    N: int
    m: int

    def __post_init__(self):
        if not 0 <= self.m <= self.N:
            raise ValueError(f"Nullity {self.m} outside [0, {self.N}]")

    @property
    def empty(self) -> bool:
        return (self.N - self.m) % 2 == 1

    @property
    def ell(self) -> int | None:
        return None if self.empty else (self.N - self.m) // 2

    @property
    def dim(self) -> int:
        """Formula dimension; read together with ``empty``."""
        return _formula_dim(self.N, self.m)

    @property
    def codim(self) -> int:
        return stratum_codim(self.N, self.m)

    @property
    def admissible(self) -> bool:
        return nullity_admissible(self.N, self.m)


def pfaffian_of(
    entry: Callable[[int, int], T], indices: Sequence[int], one: T
) -> T:
    """Pfaffian of the principal submatrix on ``indices``, expanded along the first row.

    Works over any commutative ring whose elements support ``+``, ``-`` and ``*``.
    """
    if not indices:
        return one
    if len(indices) % 2:
        return one - one
    first, rest = indices[0], indices[1:]
    total = one - one
    for pos, j in enumerate(rest):
        a = entry(first, j)
        if a == 0:
            continue
        minor = pfaffian_of(entry, rest[:pos] + rest[pos + 1 :], one)
        total = total + a * minor if pos % 2 == 0 else total - a * minor
    return total


def pfaffian(Q: SkewForm) -> Rational:
    return pfaffian_of(lambda i, j: Q.entries[i, j], tuple(range(Q.n)), Rational(1))


def kernel(Q: SkewForm) -> Subspace:
    vectors = Q.entries.nullspace() if Q.n else []
    return Subspace(Q.n, tuple(ImmutableMatrix(v) for v in vectors))


def nullity(Q: SkewForm) -> int:
    return Q.n - Q.entries.rank()


def darboux_split(
    Q: SkewForm, inner: SkewForm | Matrix | None = None
) -> tuple[Subspace, Subspace, SkewForm]:
    """Split ``V = ker Q + complement`` with the complement orthogonal for ``inner``.

    ``inner`` is a symmetric positive Gram matrix (identity by default). Returns the
    kernel, its complement and the restriction of ``Q`` to the complement.
    """
    h = Matrix.eye(Q.n) if inner is None else Matrix(inner)
    ker = kernel(Q)
    if ker.dim == 0:
        complement = Subspace.full(Q.n)
    else:
        orth = (ker.matrix().T * h).nullspace()
        complement = Subspace(Q.n, tuple(ImmutableMatrix(v) for v in orth))

    restricted = Q.restrict(complement)
    if restricted.entries.det() == 0:
        raise ArithmeticError("Restriction of Q to the kernel complement is degenerate")
    return ker, complement, restricted


def _formula_dim(N: int, m: int) -> int:
    return (N - m) * (N + m - 1) // 2


def stratum_dim(N: int, m: int) -> int:
    """Dimension ``(N - m)(N + m - 1)/2`` of the nullity-``m`` stratum of skew forms on R^N.

    Raises ``ValueError`` when ``N - m`` is odd; ``StratumId(N, m).dim`` reports the formula
    value for such strata together with ``empty``.
    """
    if not 0 <= m <= N:
        raise ValueError(f"Nullity {m} outside [0, {N}]")
    if (N - m) % 2:
        raise ValueError(f"Stratum (N={N}, m={m}) is empty by parity")
    return _formula_dim(N, m)


def stratum_codim(N: int, m: int) -> int:
    if not 0 <= m <= N:
        raise ValueError(f"Nullity {m} outside [0, {N}]")
    return m * (m - 1) // 2


def nullity_admissible(N: int, m: int) -> bool:
    return 0 <= m <= N and (N - m) % 2 == 0 and m * (m - 1) // 2 <= N


def nullity_bounds(N: int) -> dict[str, float]:
    """Largest admissible nullity as a radical: the codimension bound and the printed one."""
    return {
        "codimension_bound": 0.5 + math.sqrt(2 * N + 0.25),
        "printed_bound": 0.5 + math.sqrt(8 * N + 0.25),
    }


def stratum_table(N: int) -> list[dict[str, Any]]:
    return [
        {"m": s.m, "dim": s.dim, "codim": s.codim, "empty": s.empty, "admissible": s.admissible}
        for s in (StratumId(N, m) for m in range(N + 1))
    ]


def stratum_dim_oracle(N: int, m: int, trials: int = 5, seed: int = 0) -> int:
    """Independent check of ``stratum_dim`` by the rank of a parametrization Jacobian.

    Forms of nullity ``m`` are written ``Q = L^T S L`` with ``L = [I | C]`` (a chart of
    the Grassmannian of kernels) and ``S`` a nondegenerate skew block. The exact rank of
    the Jacobian of ``(C, S) -> Q`` at a random rational point is returned.
    """
    if (N - m) % 2:
        raise ValueError(f"Stratum (N={N}, m={m}) is empty by parity")
    r = N - m
    c_syms = symbols(f"c0:{r * m}") if r * m else ()
    s_syms = symbols(f"s0:{r * (r - 1) // 2}") if r > 1 else ()
    params = list(c_syms) + list(s_syms)
    if not params:
        return 0

    lift = Matrix.hstack(Matrix.eye(r), Matrix(r, m, list(c_syms))) if m else Matrix.eye(r)
    block = zeros(r, r)
    it = iter(s_syms)
    for i in range(r):
        for j in range(i + 1, r):
            s = next(it)
            block[i, j], block[j, i] = s, -s
    q = lift.T * block * lift
    entries = Matrix([q[i, j] for i in range(N) for j in range(i + 1, N)])
    jac = entries.jacobian(params)

    rng = np.random.default_rng(seed)
    rank = 0
    for trial in range(trials):
        point = {p: random_rational(rng, nonzero=True) for p in params}
        if block.subs(point).det() == 0:
            logger.debug(f"Oracle sample {trial} hit a degenerate block, resampling")
            continue
        rank = jac.subs(point).rank()
        if rank == len(params):
            return rank
        logger.debug(f"Oracle sample {trial} is rank deficient ({rank}), resampling")
    return rank
