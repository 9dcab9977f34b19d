import numpy as np

from presymplectic_strata.utils.rng import random_rational, worker_streams


class TestWorkerStreams:
    def test_reproducible(self):
        first = [g.integers(0, 1000, 5) for g in worker_streams(7, 3)]
        second = [g.integers(0, 1000, 5) for g in worker_streams(7, 3)]
        for a, b in zip(first, second):
            assert np.array_equal(a, b)

    def test_streams_differ(self):
        a, b = worker_streams(7, 2)
        assert not np.array_equal(a.integers(0, 10**9, 4), b.integers(0, 10**9, 4))


class TestRandomRational:
    def test_bounds(self, rng):
        for _ in range(200):
            value = random_rational(rng, bound=2, denominator=3)
            assert abs(value) <= 2
            assert value.q <= 3

    def test_nonzero(self, rng):
        assert all(random_rational(rng, nonzero=True) != 0 for _ in range(200))
