import pytest

from oscmult.geometry import make_space


@pytest.fixture(scope="session")
def h3():
    return make_space("RealHyp", 3)


@pytest.fixture(scope="session")
def h2c():
    return make_space("ComplexHyp", 2)


@pytest.fixture(scope="session")
def h2():
    return make_space("RealHyp", 2)


from hypothesis import settings

# numerical checks have uneven run times; correctness, not speed, is under test
settings.register_profile("numerics", deadline=None, derandomize=True)
settings.load_profile("numerics")


@pytest.fixture(scope="session")
def h3_far_half(h3):
    """Far part of kappa_{1/2,0} on H^3 on shells 1..40 (shared by shell and acceptance tests)."""
    from oscmult.kunze_stein import far_kernel
    from oscmult.multipliers import MultiplierSpec

    return far_kernel(h3, MultiplierSpec(0.5, 0.0, h3.rho), 40)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion and assert it."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
