import pytest

from chargegame import build_game, demo_scenario, reference_game


@pytest.fixture(scope="session")
def ref_game():
    return reference_game(seed=0)


@pytest.fixture(scope="session")
def demo():
    return demo_scenario()


@pytest.fixture(scope="session")
def demo_build(demo):
    return build_game(demo)


@pytest.fixture(scope="session")
def demo_snapshot(demo_build):
    return demo_build.snapshot


def random_simplex(rng, n):
    v = rng.exponential(1.0, n)
    return v / v.sum()
