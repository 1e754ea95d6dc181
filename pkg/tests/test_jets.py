import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerlab import jets
from finslerlab.errors import ConfigError, DomainError, SingularityError
from finslerlab.jets import JetConfig, constant, extract, fd_oracle, lift_variable, mixed_partials

T4 = JetConfig(0, 1, 0, 4)


def t_at(v, cfg=T4):
    return lift_variable("y1", v, cfg)


def test_value_slot():
    cfg = JetConfig(1, 0, 3, 0)
    assert extract(lift_variable("x1", 3.0, cfg)) == 3.0


def test_square_derivative():
    cfg = JetConfig(1, 0, 3, 0)
    t = lift_variable("x1", 3.0, cfg)
    assert extract(t * t, alpha=(1,)) == pytest.approx(6.0)


def test_mixed_product():
    cfg = JetConfig(1, 1, 2, 2)
    x = lift_variable("x1", 2.0, cfg)
    y = lift_variable("y1", 3.0, cfg)
    assert extract(x * y, alpha=(1,), beta=(1,)) == pytest.approx(1.0)


def test_elementary_functions():
    assert extract(jets.exp(t_at(0.0)), beta=(4,)) == pytest.approx(1.0)
    assert extract(jets.sqrt(t_at(4.0)), beta=(1,)) == pytest.approx(0.25)
    assert extract(1 / t_at(2.0), beta=(2,)) == pytest.approx(0.25)
    assert extract(t_at(5.0) ** 3, beta=(3,)) == pytest.approx(6.0)
    assert extract(constant(7.0, T4), beta=(1,)) == 0.0


def test_monomial():
    cfg = JetConfig(0, 2, 0, 3)
    a, b = lift_variable("y1", 1.0, cfg), lift_variable("y2", 1.0, cfg)
    assert extract(a * a * b, beta=(2, 1)) == pytest.approx(2.0)


def test_errors():
    with pytest.raises(SingularityError):
        1 / t_at(0.0)
    with pytest.raises(DomainError):
        jets.sqrt(t_at(-1.0))
    with pytest.raises(DomainError):
        jets.log(t_at(0.0))
    with pytest.raises(ConfigError):
        extract(t_at(1.0), beta=(5,))
    with pytest.raises(ConfigError):
        lift_variable("y3", 1.0, JetConfig(0, 2))
    with pytest.raises(ConfigError):
        JetConfig(-1, 2)


def test_jets_are_immutable():
    j = t_at(1.0)
    with pytest.raises(AttributeError):
        j.coeffs = None


def test_mixed_partials_shape_and_symmetry():
    cfg = JetConfig(2, 2, 1, 3)
    x = [lift_variable(f"x{i + 1}", v, cfg) for i, v in enumerate((0.3, -0.2))]
    y = [lift_variable(f"y{i + 1}", v, cfg) for i, v in enumerate((1.0, 0.7))]
    f = jets.sqrt((1 + x[0] * x[0]) * y[0] * y[0] + jets.exp(x[1]) * y[1] * y[1])
    d = mixed_partials(f, 1, 2)
    assert d.shape == (2, 2, 2)
    assert np.allclose(d, d.transpose(0, 2, 1))


# -- finite-difference oracle -------------------------------------------------


def quartic(x, y):
    return (y[0] ** 4 + y[1] ** 4) ** 0.25


def test_fd_examples():
    assert fd_oracle(lambda x, y: math.hypot(*y), [], [3.0, 4.0], (), (1, 0)) == pytest.approx(0.6, abs=1e-8)
    assert fd_oracle(lambda x, y: y[0] * y[1], [], [0.4, -1.3], (), (1, 1)) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("beta", [(a, b) for a in range(5) for b in range(5) if 0 < a + b <= 4])
def test_jets_agree_with_fd(beta):
    cfg = JetConfig(0, 2, 0, 4)
    a, b = lift_variable("y1", 1.0, cfg), lift_variable("y2", 0.7, cfg)
    exact = extract((a**4 + b**4) ** 0.25, beta=beta)
    approx = fd_oracle(quartic, [], [1.0, 0.7], (), beta)
    tol = 1e-6 if sum(beta) <= 3 else 1e-5
    assert abs(exact - approx) <= tol * max(1.0, abs(exact))


def test_fd_rejects_order_five():
    with pytest.raises(ConfigError):
        fd_oracle(quartic, [], [1.0, 0.7], (), (3, 2))


# -- algebra laws -------------------------------------------------------------

vals = st.floats(-3.0, 3.0, allow_nan=False)
pos = st.floats(0.2, 3.0)
CFG = JetConfig(1, 1, 2, 3)


def jet(a, b, c):
    x = lift_variable("x1", a, CFG)
    y = lift_variable("y1", b, CFG)
    return c + x * y - 0.5 * y * y + x


def close(p, q, tol=1e-9):
    return np.allclose(p.coeffs, q.coeffs, rtol=tol, atol=tol)


@given(vals, vals, vals, vals, vals, vals)
def test_ring_laws(a, b, c, d, e, f):
    p, q, r = jet(a, b, c), jet(d, e, f), jet(b, a, 0.3)
    assert close(p * q, q * p)
    assert close((p * q) * r, p * (q * r), 1e-8)
    assert close(p * (q + r), p * q + p * r, 1e-8)
    assert close(p - p, constant(0.0, CFG))


@given(pos, pos)
def test_division_inverts_multiplication(a, b):
    p = constant(1.5, CFG) + lift_variable("y1", a, CFG) * lift_variable("x1", b, CFG)
    assert close((p * p) / p, p, 1e-8)


@given(pos)
def test_exp_log_roundtrip(a):
    p = lift_variable("y1", a, CFG) + 0.5
    assert close(jets.exp(jets.log(p)), p, 1e-8)
    assert close(jets.sqrt(p) * jets.sqrt(p), p, 1e-8)


@settings(max_examples=30)
@given(st.floats(0.3, 2.0), st.floats(-1.5, 1.5))
def test_power_matches_closed_derivatives(v, k):
    t = lift_variable("y1", v, T4)
    r = t**k
    assert extract(r, beta=(1,)) == pytest.approx(k * v ** (k - 1), rel=1e-10)
    assert extract(r, beta=(2,)) == pytest.approx(k * (k - 1) * v ** (k - 2), rel=1e-9, abs=1e-12)
