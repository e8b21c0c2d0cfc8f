import itertools

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ilh", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("ilh")


def all_signs(n: int) -> np.ndarray:
    """Every vector in {-1, +1}^n, one per row."""
    return np.array(list(itertools.product((-1, 1), repeat=n)), dtype=np.int8).reshape(-1, n)


def brute_min(e) -> float:
    from ilhash.losses import energy_eval
    return min(energy_eval(e, z) for z in all_signs(e.n_vars))


def random_energy(rng, n: int, density: float = 0.5, submodular: bool = False, linear: bool = True,
                  integral: bool = True):
    from ilhash.losses import QuadraticEnergy
    rows, cols = np.triu_indices(n, 1)
    keep = rng.random(rows.size) < density
    rows, cols = rows[keep], cols[keep]
    if integral:
        coef = rng.integers(-4, 5, rows.size).astype(float)
        lin = rng.integers(-5, 6, n).astype(float) if linear else None
    else:
        coef = rng.normal(size=rows.size)
        lin = rng.normal(size=n) if linear else None
    if submodular:
        coef = -np.abs(coef)
    return QuadraticEnergy(n, rows, cols, coef, lin, float(rng.integers(-3, 4)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
