import pytest

from definetti_nash import DiffusionModel, ProfitRate, solve_psi

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def linear_model():
    return DiffusionModel(0.08, "0.25*x", "2")


@pytest.fixture(scope="session")
def linear_fs(linear_model):
    return solve_psi(linear_model)


@pytest.fixture(scope="session")
def complicated_model():
    return DiffusionModel(0.1, "0.11*x + 0.001", "2*(1+x)/(2+x)")


@pytest.fixture(scope="session")
def complicated_profit():
    return ProfitRate([(0.0, "1/17"), (1.0, "1/6"), (3.0, "1/6 + (x^2 - 6*x + 9)/24"), (5.0, "1")])


@pytest.fixture(scope="session")
def complicated_fs(complicated_model):
    return solve_psi(complicated_model)


@pytest.fixture(scope="session")
def jump_profit():
    return ProfitRate([(0.0, "0.5"), (10.0, "1")])
