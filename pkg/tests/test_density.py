import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flrwdust import CharacteristicFlow, InitialData, ScaleFactor
from flrwdust.density import (density_along_char, density_at_x, density_closed_form, density_eval,
                              density_gradient)
from flrwdust.errors import BlownUpStateError

SCALES = [ScaleFactor.exponential(1.0), ScaleFactor.power(0.9), ScaleFactor.power(0.5),
          ScaleFactor.power(0.25), ScaleFactor.power(0.0)]


@pytest.mark.parametrize("sf", SCALES)
def test_zero_velocity_is_pure_dilution(sf):
    data = InitialData(3, "zero", rho0="gaussian", epsilon=0.2)
    flow = CharacteristicFlow(sf, data)
    a = np.array([0.4, -0.1, 1.0])
    t = 2.5
    rho0, drho0 = data.density0(a)
    dil = float(sf.inv_power(3, t))
    assert density_along_char(flow, t, a) == pytest.approx(0.2 * rho0 * dil, rel=1e-13)
    np.testing.assert_allclose(density_gradient(flow, t, a), 0.2 * drho0 * dil, rtol=1e-12)


@pytest.mark.parametrize("sf", SCALES)
@pytest.mark.parametrize("n", [1, 2, 3])
def test_quadrature_matches_closed_form(sf, n):
    flow = CharacteristicFlow(sf, InitialData(n, "-gaussian", rho0="gaussian", epsilon=0.25))
    pts = np.random.default_rng(n).uniform(-2, 2, size=(6, n))
    for t in (0.5, 2.0):
        np.testing.assert_allclose(density_along_char(flow, t, pts, rtol=1e-11),
                                   density_closed_form(flow, t, pts), rtol=1e-9)


def test_gradient_with_vanishing_initial_density():
    # rho0 vanishes at the label yet its gradient does not
    from flrwdust.initial_data import CustomDensity
    rho0 = CustomDensity(lambda p: p[:, 0] ** 2, lambda p: np.stack([2 * p[:, 0]], axis=1), bound=10.0)
    data = InitialData(1, "arctan", rho0=rho0, epsilon=0.2)
    flow = CharacteristicFlow(ScaleFactor.power(0.5), data)
    assert density_along_char(flow, 1.0, 0.0) == 0.0
    x0 = flow.position(1.0, 1e-3)[0]
    h = 1e-6
    x = np.array([[x0 - h], [x0 + h]])
    r = density_closed_form(flow, 1.0, flow.invert_position(1.0, x, tol=1e-14))
    assert density_gradient(flow, 1.0, 1e-3)[0] == pytest.approx((r[1] - r[0]) / (2 * h), rel=1e-5)


def test_expanding_gradient_decays():
    flow = CharacteristicFlow(ScaleFactor.exponential(1.0), InitialData(2, "gaussian", rho0="gaussian",
                                                                        epsilon=0.1))
    a = np.array([0.5, 0.5])
    g1 = np.linalg.norm(density_gradient(flow, 1.0, a))
    g2 = np.linalg.norm(density_gradient(flow, 1e3, a))
    assert g1 > 0 and g2 <= 1e-12 * g1


def test_eval_bundle_and_eulerian_lookup():
    flow = CharacteristicFlow(ScaleFactor.power(0.25), InitialData(2, "gaussian", rho0="gaussian", epsilon=0.3))
    a = np.array([0.2, -0.6])
    ev = density_eval(flow, 1.5, a)
    assert ev.rho == pytest.approx(density_along_char(flow, 1.5, a), rel=1e-12)
    x = flow.position(1.5, a)
    assert density_at_x(flow, 1.5, x) == pytest.approx(ev.rho, rel=1e-8)


def test_density_after_blowup_raises():
    flow = CharacteristicFlow(ScaleFactor.power(0.0), InitialData(1, "-arctan", epsilon=0.5))
    with pytest.raises(BlownUpStateError):
        density_gradient(flow, 3.0, 0.0)


@settings(max_examples=40, deadline=None)
@given(t=st.floats(0.0, 30.0), x=st.floats(-3, 3))
def test_density_positive_before_blowup(t, x):
    flow = CharacteristicFlow(ScaleFactor.power(0.9), InitialData(1, "arctan", rho0="gaussian", epsilon=0.3))
    rho = density_along_char(flow, t, x)
    assert rho > 0
    assert rho == pytest.approx(density_closed_form(flow, t, x), rel=1e-7)
