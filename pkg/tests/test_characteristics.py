import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import hyp2f1

from flrwdust import CharacteristicFlow, InitialData, ScaleFactor
from flrwdust.characteristics import F2, F4, F6, I45, integrals_between, time_integrals
from flrwdust.errors import BlownUpStateError, DomainError, InversionError

from test_initial_data import constant

SCALES = [ScaleFactor.exponential(1.0), ScaleFactor.power(0.9), ScaleFactor.power(0.5),
          ScaleFactor.power(0.25), ScaleFactor.power(0.0)]


def test_power_law_F2_hypergeometric_oracle():
    # int (1+s)^-p (1 + q (1+s)^-p)^-3/2 ds = G(1+t) - G(1),
    # G(u) = u^(1-p)/(1-p) 2F1(3/2, (p-1)/p; (2p-1)/p; -q u^-p)
    p, q, t = 0.6, 0.37, 40.0
    b = (p - 1) / p
    G = lambda u: u ** (1 - p) / (1 - p) * hyp2f1(1.5, b, b + 1, -q * u ** -p)
    got = time_integrals(ScaleFactor.power(p / 2), [q], [t], (F2,), rtol=1e-13)[F2][0, 0]
    assert got == pytest.approx(G(1 + t) - G(1.0), rel=1e-11)


@pytest.mark.parametrize("sf", SCALES[:4])
@pytest.mark.parametrize("pair", [F2, F4, F6, I45])
def test_time_integrals_match_scipy_quad(sf, pair):
    k, m = pair
    q = 0.2
    for t in (0.5, 7.0, 900.0):
        f = lambda s: float(sf.inv_power(k, s)) * (1 + q * float(sf.inv_power(2, s))) ** -m
        ref = quad(f, 0.0, t, epsabs=0, epsrel=1e-13, limit=500)[0]
        got = time_integrals(sf, [q], [t], (pair,))[pair][0, 0]
        assert got == pytest.approx(ref, rel=1e-9)


def test_q_derivative_identity():
    sf = ScaleFactor.power(0.3)
    q, h, t = 0.4, 1e-5, 12.0
    ints = time_integrals(sf, [q - h, q + h], [t], (F2,), rtol=1e-13)[F2][0]
    dq = (ints[1] - ints[0]) / (2 * h)
    assert dq == pytest.approx(-1.5 * time_integrals(sf, [q], [t], ((4, 2.5),), rtol=1e-13)[(4, 2.5)][0, 0],
                               rel=1e-8)


def test_integrals_between_additive():
    sf = ScaleFactor.power(0.4)
    q = np.array([0.1, 0.5])
    full = time_integrals(sf, q, [9.0], (F2,))[F2][0]
    head = time_integrals(sf, q, [4.0], (F2,))[F2][0]
    tail = integrals_between(sf, q, 4.0, 9.0, (F2,))[F2]
    np.testing.assert_allclose(head + tail, full, rtol=1e-10)


def test_speed_example_exponential():
    eps = 0.1 / math.sqrt(1.01)
    flow = CharacteristicFlow(ScaleFactor.exponential(1.0), InitialData(1, constant([1.0]), epsilon=eps))
    e2 = math.exp(-2.0)
    assert flow.speed_squared(1.0, 0.3) == pytest.approx(0.01 * e2 / (1 + 0.01 * e2), rel=1e-13)
    assert flow.speed_squared(0.0, 0.3) == pytest.approx(eps ** 2, rel=1e-14)


@pytest.mark.parametrize("sf", SCALES)
def test_zero_data_trivial(sf):
    flow = CharacteristicFlow(sf, InitialData(2, "zero"))
    a = np.array([0.3, -1.2])
    assert flow.speed_squared(5.0, a) == 0.0
    assert np.all(flow.velocity(5.0, a) == 0.0)
    np.testing.assert_array_equal(flow.position(5.0, a), a)
    np.testing.assert_array_equal(flow.jacobian_matrix(5.0, a), np.eye(2))
    assert np.all(flow.velocity_gradient(5.0, a) == 0.0)
    assert np.all(flow.position_hessian(5.0, a) == 0.0)
    np.testing.assert_allclose(flow.invert_position(5.0, a), a)


@pytest.mark.parametrize("sf", SCALES)
def test_initial_identities(sf):
    data = InitialData(3, "gaussian", epsilon=0.3)
    flow = CharacteristicFlow(sf, data)
    a = np.array([0.2, -0.4, 0.9])
    np.testing.assert_allclose(flow.velocity(0.0, a), data.epsilon * data.profile(a)[0][0], rtol=1e-14)
    ev = flow.jacobian(0.0, a)
    np.testing.assert_allclose(ev.matrix, np.eye(3), atol=1e-15)
    assert ev.det == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("sf", SCALES)
def test_position_time_derivative_is_coordinate_velocity(sf):
    flow = CharacteristicFlow(sf, InitialData(2, "-arctan", epsilon=0.2), rtol=1e-12)
    a = np.array([0.7, -0.3])
    t, h = 1.3, 1e-5
    dxdt = (flow.position(t + h, a) - flow.position(t - h, a)) / (2 * h)
    np.testing.assert_allclose(dxdt * sf.eval_a(t), flow.velocity(t, a), rtol=1e-7)


def test_linear_hessian_matches_finite_differences():
    from flrwdust.initial_data import Linear
    flow = CharacteristicFlow(ScaleFactor.power(0.25), InitialData(1, Linear(-0.7), epsilon=0.3), rtol=1e-12)
    t, a, h = 2.0, 0.4, 1e-5
    fd = (flow.jacobian_matrix(t, a + h) - flow.jacobian_matrix(t, a - h)) / (2 * h)
    assert flow.position_hessian(t, a)[0, 0, 0] == pytest.approx(fd[0, 0], rel=1e-7)


def test_inverse_hessian_is_second_derivative_of_inverse_map():
    flow = CharacteristicFlow(ScaleFactor.power(0.5), InitialData(2, "gaussian", epsilon=0.3), rtol=1e-12)
    t, a, h = 1.5, np.array([0.3, 0.2]), 1e-4
    x = flow.position(t, a)
    K = flow.inverse_hessian(t, a)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        Bp = np.linalg.inv(flow.jacobian_matrix(t, flow.invert_position(t, x + e, tol=1e-14)))
        Bm = np.linalg.inv(flow.jacobian_matrix(t, flow.invert_position(t, x - e, tol=1e-14)))
        np.testing.assert_allclose(K[:, :, k], (Bp - Bm) / (2 * h), atol=1e-7)


def test_blown_up_state_raises():
    data = InitialData(1, "-arctan", epsilon=0.5)
    flow = CharacteristicFlow(ScaleFactor.power(0.0), data)
    # at alpha = 0 the determinant vanishes at t = 2 (1 - 0.5 t = 0)
    with pytest.raises(BlownUpStateError) as info:
        flow.velocity_gradient(3.0, 0.0)
    assert info.value.det < 0


def test_inversion_failure():
    flow = CharacteristicFlow(ScaleFactor.power(0.0), InitialData(1, "-arctan", epsilon=0.5))
    with pytest.raises(InversionError):
        flow.invert_position(1.9, [0.5], maxiter=1)


def test_negative_time_rejected():
    flow = CharacteristicFlow(ScaleFactor.power(0.5), InitialData(1, "arctan"))
    with pytest.raises(DomainError):
        flow.position(-1.0, 0.0)


def test_pickle_keeps_results():
    flow = CharacteristicFlow(ScaleFactor.power(0.9), InitialData(2, "arctan", epsilon=0.2))
    a = np.array([0.5, 1.0])
    again = pickle.loads(pickle.dumps(flow))
    np.testing.assert_array_equal(again.position(4.0, a), flow.position(4.0, a))


def test_frozen_position_value():
    flow = CharacteristicFlow(ScaleFactor.power(0.5), InitialData(1, "-arctan", epsilon=0.1))
    # f0 vanishes at alpha = 0, so dx/dalpha = 1 - eps ln(1+t) there
    assert flow.position(math.e - 1, 0.0) == 0.0
    assert flow.jacobian_matrix(math.e - 1, 0.0)[0, 0] == pytest.approx(0.9, rel=1e-13)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-3, 3), y=st.floats(-3, 3), t=st.floats(0, 50))
def test_round_trip_inverse(x, y, t):
    flow = CharacteristicFlow(ScaleFactor.power(0.9), InitialData(2, "arctan", epsilon=0.1))
    a = np.array([x, y])
    back = flow.invert_position(t, flow.position(t, a), tol=1e-12)
    np.testing.assert_allclose(back, a, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(t=st.floats(0, 1e4), x=st.floats(-5, 5))
def test_subluminal_along_characteristics(t, x):
    flow = CharacteristicFlow(ScaleFactor.power(0.25), InitialData(1, "-arctan", epsilon=0.5))
    assert 0.0 <= flow.speed_squared(t, x) < 1.0
