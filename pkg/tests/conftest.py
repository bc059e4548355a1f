import random

import pytest

from espoon import crypto


class FixedRandom:
    """Returns queued values from ``randrange``; falls back to a seeded RNG."""

    def __init__(self, *values, seed=0):
        self.values = list(values)
        self.fallback = random.Random(seed)

    def randrange(self, start, stop):
        if self.values:
            value = self.values.pop(0)
            assert start <= value < stop, (value, start, stop)
            return value
        return self.fallback.randrange(start, stop)


TINY = crypto.InjectedGroup(p=23, q=11, g=2)


@pytest.fixture
def tiny():
    """p=23, q=11, g=2 with x=7; keys for user A with x1=4, x2=3."""
    params, msk = crypto.init(TINY, FixedRandom(7), prf_key=b"tiny")
    user_key, server_key = crypto.keygen(params, msk, "A", FixedRandom(4))
    return params, msk, user_key, server_key


@pytest.fixture(scope="session")
def production():
    return crypto.init("production", random.Random(2024))


@pytest.fixture(scope="session")
def medium():
    return crypto.init("medium", random.Random(7))


@pytest.fixture(scope="session")
def toy():
    return crypto.init("toy", random.Random(11))


@pytest.fixture
def rng():
    return random.Random(12345)
