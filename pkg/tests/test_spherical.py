import math

import numpy as np
import pytest

from flrwdust import InitialData, ScaleFactor, SphericalFlow
from flrwdust.blowup import scalar_blowup_time_1d
from flrwdust.errors import BlownUpStateError, DomainError


def test_zero_data_examples():
    sf = ScaleFactor.power(0.5)
    sph = SphericalFlow(sf, InitialData(1, "zero", rho0="gaussian", epsilon=0.2))
    assert sph.radial_flow(2.0, 0.7) == (0.7, 0.0)
    assert sph.radial_derivs(2.0, 0.7).as_tuple() == (1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    rho0, drho0 = sph.data.density0(np.array([[0.7]]))
    dil = float(sf.inv_power(3, 2.0))
    assert sph.density_spherical(2.0, 0.7) == pytest.approx(0.2 * rho0[0] * dil, rel=1e-13)
    assert sph.density_gradient_spherical(2.0, 0.7) == pytest.approx(0.2 * drho0[0, 0] * dil, rel=1e-12)


def test_static_uniform_density_is_constant():
    sph = SphericalFlow(ScaleFactor.power(0.0), InitialData(1, "zero", epsilon=0.3))
    for t in (0.0, 1.0, 1e4):
        assert sph.density_spherical(t, 1.3) == 0.3


def test_t2_matches_one_dimensional_formula():
    sf = ScaleFactor.power(0.25)
    data = InitialData(1, "-arctan", rho0="gaussian", epsilon=0.2)
    sph = SphericalFlow(sf, data)
    for a in (0.0, 0.4, 1.5):
        assert sph.t2(a) == scalar_blowup_time_1d(sf, data, a)


def test_density_routes_agree():
    sph = SphericalFlow(ScaleFactor.power(0.5), InitialData(1, "-arctan", rho0="gaussian", epsilon=0.3))
    for a in (0.1, 0.8):
        t = 0.7 * sph.t2(a)
        assert sph.density_spherical(t, a) == pytest.approx(sph.density_closed_form(t, a), rel=1e-7)


def test_gap_parametrisation_stays_accurate_near_blowup():
    sph = SphericalFlow(ScaleFactor.power(0.0), InitialData(1, "-arctan", rho0="gaussian", epsilon=0.2))
    # a = 1, alpha = 0: dr/dalpha = 1 - eps t exactly, t2 = 5
    gaps = np.array([1e-3, 1e-8, 1e-13])
    np.testing.assert_allclose(sph.radial_derivs_gap(gaps, 0.0)["dr_dalpha"], 0.2 * gaps, rtol=1e-12)


def test_after_blowup_raises():
    sph = SphericalFlow(ScaleFactor.power(0.0), InitialData(1, "-arctan", epsilon=0.2))
    with pytest.raises(BlownUpStateError):
        sph.radial_derivs(6.0, 0.0)


def test_rate_fit_needs_blowup_regime():
    sph = SphericalFlow(ScaleFactor.exponential(1.0), InitialData(1, "-arctan", epsilon=0.2))
    with pytest.raises(DomainError):
        sph.blowup_rate_fit(0.0)


def test_negative_labels_rejected():
    sph = SphericalFlow(ScaleFactor.power(0.5), InitialData(1, "-arctan"))
    with pytest.raises(DomainError):
        sph.radial_flow(1.0, -0.5)


def test_rate_fit_frozen_static_case():
    sph = SphericalFlow(ScaleFactor.power(0.0), InitialData(1, "-arctan", rho0="gaussian", epsilon=0.2))
    fit = sph.blowup_rate_fit(0.0)
    assert fit.t2 == 5.0
    assert fit.gradient_exponent == pytest.approx(-1.0, abs=1e-6)
    assert fit.limit == pytest.approx(-1.0, rel=1e-6)
    d = fit.to_dict()
    assert d["a_t2"] == 1.0 and "samples" not in d
