import numpy as np
import pytest

from finslerlab import change as chg
from finslerlab import finsler, jets


def b_field(x):
    return (0.2 + 0.1 * x[1], 0.1, -0.15 + 0.05 * x[0] * x[0])


def sigma_field(x):
    return 0.1 * x[0]


def custom_f(Lt, beta):
    return jets.sqrt(Lt * Lt + beta * beta) + 0.1 * beta


def change_family():
    """The six changes named in the acceptance list, all in dimension 3."""
    return [
        chg.randers(b_field),
        chg.kropina(b_field),
        chg.energy(3, 2, b_field),
        chg.generalized_randers(0.7, 1.3, b_field),
        chg.beta_conformal(b_field, sigma_field),
        chg.ChangeSpec(custom_f, b_field, sigma_field, "custom", (), "custom"),
    ]


def base_family():
    return [finsler.euclidean(3), finsler.riemannian_diag(3), finsler.quartic_minkowski(3)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the test body fills in ``detail`` and asserts."""
    rec = {"detail": ""}
    yield rec
    name = request.node.name
    failed = getattr(request.node, "rep_call", None)
    ok = failed is not None and failed.passed
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {rec['detail']}"
    ACCEPTANCE[name] = line
    print(line)


@pytest.hookimpl(hookwrapper=True, tryfirst=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
