"""Spherically symmetric flows v^i = vr(t, r) x^i / r.

The radial velocity obeys the one-dimensional relativistic Burgers
equation, so the label-to-radius map r(t, alpha) and vr are the n = 1
closed forms with signed g0.  The density keeps the ambient dimension
``dim`` in its dilution factor a^-dim.  The curvature contribution
(dim - 1) vr / r of the divergence is optional and off by default.
"""

from dataclasses import dataclass
import math

import numpy as np

from .blowup import scalar_blowup_time_1d
from .characteristics import F2, F4, F6, I45, CharacteristicFlow, integrals_between, time_integrals
from .errors import BlownUpStateError, DomainError, FitDiagnosticsError
from .quadrature import bisect, cumulative


@dataclass(frozen=True)
class RadialState:
    r: float
    vr: float
    rho: float
    t: float
    alpha: float


@dataclass(frozen=True)
class RadialDerivs:
    dr_dalpha: float
    d2r_dalpha2: float
    dv_dalpha: float
    d2v_dalpha2: float
    v_r: float
    v_rr: float

    def as_tuple(self):
        return (self.dr_dalpha, self.d2r_dalpha2, self.dv_dalpha, self.d2v_dalpha2, self.v_r, self.v_rr)


@dataclass(frozen=True)
class RateFit:
    t2: float
    gradient_exponent: float
    density_exponent: float
    r_squared: dict
    limit: float
    a_t2: float
    simultaneity_gap: float
    samples: dict

    def to_dict(self):
        return {"t2": self.t2, "exponents": {"v_r": self.gradient_exponent, "rho": self.density_exponent},
                "r_squared": self.r_squared, "limit_dt_times_v_r": self.limit, "a_t2": self.a_t2,
                "simultaneity_gap": self.simultaneity_gap}


class SphericalFlow:
    """Radial flow for a one-dimensional profile ``data`` (n = 1) in ``dim`` dimensions."""

    def __init__(self, scale, data, dim=3, curvature=False, rtol=1e-10):
        if data.n != 1:
            raise DomainError("radial data must be one-dimensional")
        if dim not in (1, 2, 3):
            raise DomainError("dim must be 1, 2 or 3")
        self.scale = scale
        self.data = data
        self.dim = dim
        self.curvature = bool(curvature)
        self.flow = CharacteristicFlow(scale, data, rtol=rtol)
        self._t2 = {}

    def _labels(self, alpha):
        a = np.atleast_1d(np.asarray(alpha, dtype=float))
        if np.any(a < 0):
            raise DomainError("radial labels must be non-negative")
        return a, np.ndim(alpha) == 0

    def t2(self, alpha):
        """First time dr/dalpha vanishes at this label (inf if never)."""
        key = float(alpha)
        if key not in self._t2:
            self._t2[key] = scalar_blowup_time_1d(self.scale, self.data, key)
        return self._t2[key]

    def radial_flow(self, t, alpha):
        a, single = self._labels(alpha)
        r = self.flow.position(t, a[:, None])[:, 0]
        v = self.flow.velocity(t, a[:, None])[:, 0]
        return (float(r[0]), float(v[0])) if single else (r, v)

    def _tail_F2(self, q, t2, gaps):
        """int over [t2 - g, t2] of a^-2 (1 + q a^-2)^-3/2, parametrised by the exact gap g."""
        gaps = np.asarray(gaps, dtype=float)
        if self.scale.kind == "power" and self.scale.l == 0.0:
            return gaps / (1.0 + q) ** 1.5

        def integrand(theta):
            s = np.maximum(t2 - theta[:, None] * gaps[None, :], 0.0)
            A2 = np.asarray(self.scale.inv_power(2.0, s))
            return A2 * (1.0 + q * A2) ** -1.5 * gaps[None, :]

        return cumulative(integrand, np.array([0.0, 1.0]), rtol=1e-12, atol=1e-300)[-1]

    def _dr_dalpha(self, times, a, tr, gaps=None):
        """dr/dalpha on a (T, m) grid.

        When a label blows up at t2 the value is c |g0'| times the integral
        over [t, t2], evaluated from the gap t2 - t so that it stays accurate
        as t approaches t2.  ``gaps`` (T,) may be given for a single label.
        """
        c = self.data.c
        dg = tr.dg0[:, 0, 0]
        ints = time_integrals(self.scale, tr.q, times, (F2,), rtol=self.flow.rtol)[F2]
        out = 1.0 + c * dg[None, :] * ints
        for j in range(a.size):
            if dg[j] >= 0:
                continue
            t2 = self.t2(a[j])
            if not math.isfinite(t2):
                continue
            g = np.maximum(t2 - times, 0.0) if gaps is None else np.asarray(gaps, dtype=float)
            near = g <= 0.5 * t2
            if np.any(near):
                out[near, j] = -c * dg[j] * self._tail_F2(tr.q[j], t2, g[near])
        return out

    def _derivs(self, times, a, gaps=None):
        tr = self.data.transforms(a[:, None])
        c = self.data.c
        g, dg, d2g = tr.g0[:, 0], tr.dg0[:, 0, 0], tr.d2g0[:, 0, 0, 0]
        ints = time_integrals(self.scale, tr.q, times, (F2, I45), rtol=self.flow.rtol)
        ra = self._dr_dalpha(times, a, tr, gaps)
        raa = c * (d2g[None] * ints[F2] - 3.0 * (g * dg * dg)[None] * ints[I45])
        A = np.asarray(self.scale.inv_power(1.0, times))
        dv, d2v = self.flow._velocity_alpha(A, tr)
        va, vaa = dv[..., 0, 0], d2v[..., 0, 0, 0]
        return tr, ra, raa, va, vaa

    def radial_derivs(self, t, alpha):
        a, single = self._labels(alpha)
        t = float(t)
        _, ra, raa, va, vaa = self._derivs(np.array([t]), a)
        ra, raa, va, vaa = ra[0], raa[0], va[0], vaa[0]
        if np.any(ra <= 0):
            j = int(np.argmin(ra))
            raise BlownUpStateError(t, float(a[j]), float(ra[j]))
        vr = va / ra
        vrr = (vaa * ra - va * raa) / ra ** 3
        if single:
            return RadialDerivs(float(ra[0]), float(raa[0]), float(va[0]), float(vaa[0]),
                                float(vr[0]), float(vrr[0]))
        return RadialDerivs(ra, raa, va, vaa, vr, vrr)

    def radial_derivs_gap(self, gaps, alpha):
        """Radial derivatives at t = t2 - gap for one label (gaps exact)."""
        a = np.array([float(alpha)])
        t2 = self.t2(a[0])
        gaps = np.atleast_1d(np.asarray(gaps, dtype=float))
        _, ra, raa, va, vaa = self._derivs(np.maximum(t2 - gaps, 0.0), a, gaps)
        ra, raa, va, vaa = ra[:, 0], raa[:, 0], va[:, 0], vaa[:, 0]
        return {"dr_dalpha": ra, "d2r_dalpha2": raa, "dv_dalpha": va, "d2v_dalpha2": vaa,
                "v_r": va / ra, "v_rr": (vaa * ra - va * raa) / ra ** 3}

    # density

    def _rates(self, times, a, gradient, gaps=None):
        """ln rho rate (and its label-gradient rate) on a (T, m) grid."""
        c, dim = self.data.c, self.dim
        tr, ra, raa, va, vaa = self._derivs(times, a, gaps)
        if np.any(ra <= 0):
            raise BlownUpStateError(float(times.max()), a.tolist(), float(ra.min()))
        H = np.asarray(self.scale.hubble(times))[:, None]
        A = np.asarray(self.scale.inv_power(1.0, times))
        v = self.flow._velocity(A, tr)[..., 0]
        A = A[:, None]
        vr = va / ra
        rate = H * (dim - v * v / c ** 2) + A * vr
        if self.curvature:
            r = self._radius(times, a, tr)
            safe = np.where(r > 0, r, 1.0)
            rate = rate + A * (dim - 1) * np.where(r > 0, v / safe, vr)
        if not gradient:
            return rate
        vrr = (vaa * ra - va * raa) / ra ** 3
        g = (H * (2.0 / c ** 2) * v * vr - A * vrr) * ra
        return np.stack([rate, g], axis=-1)

    def _rate_integrals(self, t, a, gradient, rtol, gap=None):
        """Integral over [0, t] of the rates; near a blowup the last stretch is
        integrated in log(t2 - s) from the exact gap."""
        t2 = self.t2(a[0]) if a.size == 1 else math.inf
        if gap is None and math.isfinite(t2):
            gap = t2 - t
        split = a.size == 1 and math.isfinite(t2) and gap is not None and gap < 0.5 * t2

        def outer(x):
            s = np.expm1(x)
            r = self._rates(s, a, gradient)
            return r * np.exp(x).reshape((-1,) + (1,) * (r.ndim - 1))

        if not split:
            if t == 0:
                return np.zeros((a.size, 2)) if gradient else np.zeros(a.size)
            return cumulative(outer, np.array([0.0, math.log1p(t)]), rtol=rtol, atol=1e-14)[-1]
        G = 0.5 * t2
        first = cumulative(outer, np.array([0.0, math.log1p(t2 - G)]), rtol=rtol, atol=1e-14)[-1]

        def inner(y):
            g = np.exp(y)
            r = self._rates(np.maximum(t2 - g, 0.0), a, gradient, gaps=g)
            return r * g.reshape((-1,) + (1,) * (r.ndim - 1))

        second = cumulative(inner, np.array([math.log(gap), math.log(G)]), rtol=rtol, atol=1e-14)[-1]
        return first + second

    def _radius(self, times, a, tr):
        ints = time_integrals(self.scale, tr.q, times, (F2, F4), rtol=self.flow.rtol)
        return a[None] + self.data.c * tr.g0[None, :, 0] * (ints[F2] + tr.q[None] * ints[F4])

    def density_spherical(self, t, alpha, rtol=1e-8):
        a, single = self._labels(alpha)
        t = float(t)
        rho0, _ = self.data.density0(a[:, None])
        expo = self._rate_integrals(t, a, False, rtol)
        rho = self.data.epsilon * rho0 * np.exp(-expo)
        return float(rho[0]) if single else rho

    def density_gap(self, gap, alpha, rtol=1e-8):
        """Density at t = t2 - gap for one blowing-up label."""
        a = np.array([float(alpha)])
        t2 = self.t2(a[0])
        rho0, _ = self.data.density0(a[:, None])
        expo = self._rate_integrals(t2 - gap, a, False, rtol, gap=float(gap))
        return float(self.data.epsilon * rho0[0] * math.exp(-expo[0]))

    def density_closed_form(self, t, alpha):
        """Cross-check: eps rho0 a^-dim sqrt((1+q)/(1+q A^2)) / (dr/dalpha), no curvature."""
        a, single = self._labels(alpha)
        t = float(t)
        tr = self.data.transforms(a[:, None])
        rho0, _ = self.data.density0(a[:, None])
        A = float(self.scale.inv_power(1.0, t))
        ra = self._dr_dalpha(np.array([t]), a, tr)[0]
        rho = (self.data.epsilon * rho0 * float(self.scale.inv_power(self.dim, t))
               * np.sqrt((1.0 + tr.q) / (1.0 + tr.q * A * A)) / ra)
        return float(rho[0]) if single else rho

    def density_gradient_spherical(self, t, alpha, rtol=1e-8):
        a, single = self._labels(alpha)
        t = float(t)
        rho0, drho0 = self.data.density0(a[:, None])
        ra = self.radial_derivs(t, a).dr_dalpha
        vals = np.stack([self._rate_integrals(t, a[j:j + 1], True, rtol)[0] for j in range(a.size)])
        w = self.data.epsilon * np.exp(-vals[:, 0])
        grad = w * (rho0 * vals[:, 1] + drho0[:, 0]) / ra
        return float(grad[0]) if single else grad

    def state(self, t, alpha):
        r, v = self.radial_flow(t, alpha)
        return RadialState(r=r, vr=v, rho=self.density_spherical(t, alpha), t=float(t), alpha=float(alpha))

    # blowup rate

    def blowup_rate_fit(self, alpha, per_decade=40, window=(1e-2, 1e-6), threshold=1e6,
                        min_r2=0.99):
        """Fit log|v_r| and log rho against log(t2 - t) just before blowup."""
        alpha = float(alpha)
        reg = self.scale.classify()
        if reg.name not in ("H3", "H4"):
            raise DomainError("blowup rates are measured in regimes H3 and H4")
        tr = self.data.transforms(np.array([[alpha]]))
        if tr.J[0, 0, 0] >= 0:
            raise DomainError("the velocity profile must decrease at this label")
        t2 = self.t2(alpha)
        hi, lo = window
        gaps = np.geomspace(hi, lo, int(round(math.log10(hi / lo) * per_decade)) + 1)
        gaps = gaps[gaps < t2]
        vr = self.radial_derivs_gap(gaps, alpha)["v_r"]
        rho = np.array([self.density_gap(g, alpha) for g in gaps])
        X = np.log(gaps)
        fits = {}
        for key, y in (("v_r", np.log(np.abs(vr))), ("rho", np.log(rho))):
            slope, icpt = np.polyfit(X, y, 1)
            resid = y - (slope * X + icpt)
            r2 = 1.0 - np.sum(resid ** 2) / np.sum((y - y.mean()) ** 2)
            fits[key] = (float(slope), float(r2))
        samples = {"t": (t2 - gaps).tolist(), "gap": gaps.tolist(), "v_r": vr.tolist(),
                   "rho": rho.tolist()}
        if min(fits["v_r"][1], fits["rho"][1]) < min_r2:
            raise FitDiagnosticsError("log-log fit is not linear enough", samples=samples)
        return RateFit(t2=t2, gradient_exponent=fits["v_r"][0], density_exponent=fits["rho"][0],
                       r_squared={"v_r": fits["v_r"][1], "rho": fits["rho"][1]},
                       limit=float(gaps[-1] * vr[-1]), a_t2=float(self.scale.eval_a(t2)),
                       simultaneity_gap=self.simultaneity_gap(alpha, threshold), samples=samples)

    def blowup_indicator_times(self, alpha, threshold=1e6):
        """Last times with rho <= threshold eps rho0 and with |v_r| <= threshold."""
        alpha = float(alpha)
        t2 = self.t2(alpha)
        rho0 = self.data.density0(np.array([[alpha]]))[0][0]
        base = self.data.epsilon * rho0

        def crossing(f):
            # f(log gap) < 0 at t = 0 and turns positive close to blowup
            lo = math.log(t2)
            hi = lo - math.log(10.0)
            while f(hi) <= 0:
                lo, hi = hi, hi - math.log(10.0)
                if hi < math.log(1e-250):
                    raise FitDiagnosticsError("blowup indicator never reached its threshold")
            return t2 - math.exp(bisect(f, lo, hi, xtol=1e-13, rtol=0.0))

        t_rho = crossing(lambda y: math.log(self.density_gap(math.exp(y), alpha) / (threshold * base)))
        t_v = crossing(lambda y: math.log(abs(self.radial_derivs_gap([math.exp(y)], alpha)["v_r"][0])
                                          / threshold))
        return t_rho, t_v

    def simultaneity_gap(self, alpha, threshold=1e6):
        t_rho, t_v = self.blowup_indicator_times(alpha, threshold)
        return abs(t_rho - t_v)
