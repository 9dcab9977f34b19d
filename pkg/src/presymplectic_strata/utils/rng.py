"""Deterministic random streams.

Workers never share a generator: stream ``w`` of seed ``s`` is the ``w``-th child of
``SeedSequence(s)``, so results are reproducible regardless of scheduling.
"""

import numpy as np
from sympy import Rational


def worker_streams(seed: int, workers: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(workers)
    return [np.random.default_rng(child) for child in children]


def random_rational(
    rng: np.random.Generator, bound: int = 5, denominator: int = 4, nonzero: bool = False
) -> Rational:
    """Uniform rational ``p/q`` with ``|p| <= bound * q`` and ``1 <= q <= denominator``."""
    while True:
        q = int(rng.integers(1, denominator + 1))
        p = int(rng.integers(-bound * q, bound * q + 1))
        if p != 0 or not nonzero:
            return Rational(p, q)
