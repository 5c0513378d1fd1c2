import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flrwdust import InitialData
from flrwdust.errors import ConfigurationError, SuperluminalDataError
from flrwdust.initial_data import CustomProfile, Linear, velocity_profile


def constant(vec):
    vec = np.asarray(vec, dtype=float)
    n = vec.size
    return CustomProfile(lambda p: np.tile(vec, (p.shape[0], 1)),
                         lambda p: np.zeros((p.shape[0], n, n)),
                         lambda p: np.zeros((p.shape[0], n, n, n)), bound=float(np.linalg.norm(vec)))


def test_f0_examples():
    assert InitialData(1, "zero").eval_f0(0.3) == 0.0
    d = InitialData(2, constant([1.0, 0.0]), epsilon=0.1)
    assert d.eval_f0([0.2, 0.4]) == pytest.approx(0.1 / math.sqrt(0.99), rel=1e-14)
    np.testing.assert_allclose(d.eval_g0([0.2, 0.4]), [0.10050378152592121, 0.0], rtol=1e-14)


def test_superluminal_rejected():
    d = InitialData(1, constant([1.0]), epsilon=1.0)
    with pytest.raises(SuperluminalDataError):
        d.eval_f0(0.0)


def test_derivative_examples_at_zero_speed():
    d = InitialData(1, Linear(1.0), epsilon=0.1)
    # one-sided limit at 0+; exactly at v0 = 0 the 0/0 -> 0 convention applies
    assert d.deriv_f0(1e-9)[0] == pytest.approx(0.1, rel=1e-12)
    assert d.deriv_f0(0.0)[0] == 0.0
    assert d.deriv_g0(0.0)[0, 0] == pytest.approx(0.1, rel=1e-14)
    c = InitialData(2, constant([0.3, -0.2]), epsilon=0.5)
    assert np.all(c.deriv_f0([1.0, 2.0]) == 0.0)
    assert np.all(c.deriv_g0([1.0, 2.0]) == 0.0)
    assert np.all(c.deriv_g0([1.0, 2.0], order=2) == 0.0)


def test_norms_examples():
    d = InitialData(2, "zero")
    assert d.sup_norms()[0] == 0.0 and d.Q0 == 1.0
    a = InitialData(1, "arctan")
    assert a.N0 == pytest.approx(math.pi / 2 + 1 + 3 * math.sqrt(3) / 8, rel=1e-14)
    assert a.estimate_sup_norms()[0] <= a.N0


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("prof", ["arctan", "-arctan", "gaussian", "sine"])
def test_derivatives_match_finite_differences(n, prof):
    d = InitialData(n, prof, epsilon=0.3)
    rng = np.random.default_rng(n)
    pts = rng.uniform(-2, 2, size=(12, n))
    h = 1e-6
    tr = d.transforms(pts)
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        tp, tm = d.transforms(pts + e), d.transforms(pts - e)
        np.testing.assert_allclose(tr.dg0[:, :, j], (tp.g0 - tm.g0) / (2 * h), atol=1e-8)
        np.testing.assert_allclose(tr.d2g0[:, :, :, j], (tp.dg0 - tm.dg0) / (2 * h), atol=1e-7)
        np.testing.assert_allclose(tr.dq[:, j], (tp.q - tm.q) / (2 * h), atol=1e-8)
        np.testing.assert_allclose(tr.df0()[:, j], (tp.f0 - tm.f0) / (2 * h), atol=1e-8)


def test_signed_lookup():
    v, J, _ = velocity_profile("-arctan")(np.array([[1.0]]))
    assert v[0, 0] == pytest.approx(-math.pi / 4) and J[0, 0, 0] == pytest.approx(-0.5)


def test_bad_construction():
    with pytest.raises(ConfigurationError):
        InitialData(4, "zero")
    with pytest.raises(ConfigurationError):
        InitialData(1, "zero", epsilon=-1)
    with pytest.raises(ConfigurationError):
        InitialData.from_config({"n": 1, "bogus": 3})


def test_from_config():
    d = InitialData.from_config({"n": 2, "v0": "-arctan", "epsilon": 0.2, "rho0": "gaussian"})
    assert d.n == 2 and d.epsilon == 0.2 and d.with_epsilon(0.05).epsilon == 0.05


@settings(max_examples=80, deadline=None)
@given(eps=st.floats(0.01, 0.4), x=st.floats(-10, 10), y=st.floats(-10, 10))
def test_lorentz_identity(eps, x, y):
    # f0^2 = |g0|^2 and (1 + f0^2 / c^2) (c^2 - eps^2 |v0|^2) = c^2
    d = InitialData(2, "arctan", epsilon=eps)
    tr = d.transforms(np.array([[x, y]]))
    assert tr.f0[0] ** 2 == pytest.approx(np.sum(tr.g0[0] ** 2), rel=1e-12, abs=1e-300)
    assert (1 + tr.q[0]) * tr.S[0] == pytest.approx(1.0, rel=1e-12)
