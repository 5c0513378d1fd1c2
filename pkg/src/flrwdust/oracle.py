"""Finite-volume reference solver on 1-D planar or radial grids.

Unknowns are the velocity v and the conserved density D = a^n gamma rho,
with gamma the Lorentz factor.  In conformal-like time tau (dtau = dt/a)
the system reads

    v_tau + (v^2/2)_x = -a' v (1 - v^2/c^2)
    D_tau + (D v)_x  = 0              (planar, or radial without curvature)
    (r^k D)_tau + (r^k D v)_r = 0     (radial with curvature, k = dim - 1)

The velocity source is solved exactly (v / sqrt(c^2 - v^2) scales like
1/a) and Strang-split around a local Lax-Friedrichs advection step.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .errors import BlownUpStateError, ConfigurationError, InstabilityError, InversionError, StepError


@dataclass
class GridState:
    x: np.ndarray          # cell centres
    dx: float
    v: np.ndarray
    rho: np.ndarray
    t: float
    cfl: float = 0.45

    def copy(self):
        return replace(self, x=self.x, v=self.v.copy(), rho=self.rho.copy())


@dataclass
class Trajectory:
    snapshots: list
    blowup_indicator: object = None
    monitor_fired: bool = False
    stop_time: float = None
    gradient_history: list = field(default_factory=list)


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


class Oracle:
    """Explicit solver; ``geometry`` is "planar" or "radial"."""

    def __init__(self, scale, c=1.0, dim=1, geometry="planar", curvature=False,
                 reconstruction="none", cfl=0.45):
        if geometry not in ("planar", "radial"):
            raise ConfigurationError("geometry must be 'planar' or 'radial'")
        if reconstruction not in ("none", "minmod"):
            raise ConfigurationError("reconstruction must be 'none' or 'minmod'")
        if not 0 < cfl < 1:
            raise ConfigurationError("cfl must lie in (0, 1)")
        self.scale = scale
        self.c = float(c)
        self.dim = int(dim)
        self.geometry = geometry
        self.curvature = bool(curvature) and geometry == "radial"
        self.reconstruction = reconstruction
        self.cfl = cfl

    # setup

    def initial_state(self, data, N, x_lo, x_hi):
        """Cell averages are replaced by centre values of eps v0 and eps rho0."""
        if N < 4:
            raise ConfigurationError("need at least 4 cells")
        if self.geometry == "radial" and x_lo < 0:
            raise ConfigurationError("radial grids start at r >= 0")
        dx = (x_hi - x_lo) / N
        x = x_lo + (np.arange(N) + 0.5) * dx
        v, _, _ = data.v0(x[:, None])
        rho, _ = data.rho0(x[:, None])
        return GridState(x=x, dx=dx, v=data.epsilon * v[:, 0], rho=data.epsilon * rho,
                         t=0.0, cfl=self.cfl)

    def _gamma(self, v):
        return 1.0 / np.sqrt(1.0 - (v / self.c) ** 2)

    def conserved(self, state):
        return np.asarray(self.scale.eval_a(state.t)) ** self.dim * self._gamma(state.v) * state.rho

    # pieces

    def _source(self, v, t0, t1):
        """Exact solve of v' = -(a'/a) v (1 - v^2/c^2) from t0 to t1."""
        c = self.c
        ratio = math.exp(float(self.scale.log_scale(t0)) - float(self.scale.log_scale(t1)))
        w = v / np.sqrt(c * c - v * v) * ratio
        return c * w / np.sqrt(1.0 + w * w)

    def _ghosts(self, u, odd):
        if self.geometry == "radial":
            left = (-u[1::-1]) if odd else u[1::-1]
        else:
            left = np.array([u[0], u[0]])
        right = np.array([u[-1], u[-1]])
        return np.concatenate([left, u, right])

    def _faces(self, u, odd):
        g = self._ghosts(u, odd)
        if self.reconstruction == "minmod":
            slope = _minmod(g[1:-1] - g[:-2], g[2:] - g[1:-1])
            left = g[1:-2] + 0.5 * slope[:-1]
            right = g[2:-1] - 0.5 * slope[1:]
        else:
            left = g[1:-2]
            right = g[2:-1]
        return left, right     # states on either side of the N+1 faces

    def _advect(self, state, D, dtau):
        v = state.v
        vl, vr = self._faces(v, odd=True)
        speed = np.maximum(np.abs(vl), np.abs(vr))
        flux_v = 0.25 * (vl * vl + vr * vr) - 0.5 * speed * (vr - vl)
        vf = 0.5 * (vl + vr)
        Dl, Dr = self._faces(D, odd=False)
        flux_D = np.where(vf > 0, Dl, Dr) * vf
        dx = state.dx
        v_new = v - dtau / dx * (flux_v[1:] - flux_v[:-1])
        if self.curvature:
            k = self.dim - 1
            xf = np.concatenate([[state.x[0] - 0.5 * dx], state.x + 0.5 * dx])
            area = np.abs(xf) ** k
            vol = (np.abs(xf[1:]) ** (k + 1) - np.abs(xf[:-1]) ** (k + 1) * np.sign(xf[:-1])) / (k + 1)
            D_new = D - dtau * (area[1:] * flux_D[1:] - area[:-1] * flux_D[:-1]) / vol
        else:
            D_new = D - dtau / dx * (flux_D[1:] - flux_D[:-1])
        return v_new, D_new

    def _dtau(self, t0, t1):
        return float(self.scale.integral_inv_power(1.0, t1)) - float(self.scale.integral_inv_power(1.0, t0))

    def stable_dt(self, state):
        vmax = float(np.max(np.abs(state.v)))
        a = float(self.scale.eval_a(state.t))
        if vmax == 0:
            return math.inf
        return state.cfl * state.dx * a / vmax

    def step(self, state, dt=None):
        """Advance by dt (default: the CFL limit); returns a new GridState."""
        limit = self.stable_dt(state)
        if dt is None:
            dt = limit
            if not math.isfinite(dt):
                raise StepError("no finite CFL step for a state at rest; pass dt")
        elif dt > limit * (1 + 1e-12):
            raise StepError(f"dt={dt:.3g} exceeds the CFL limit {limit:.3g}")
        t0, t1 = state.t, state.t + dt
        th = 0.5 * (t0 + t1)
        D = self.conserved(state)
        v = self._source(state.v, t0, th)
        half = replace(state, v=v)
        v, D = self._advect(half, D, self._dtau(t0, t1))
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(D))):
            raise InstabilityError(f"non-finite values at t={t1:.6g}")
        if np.any(np.abs(v) >= self.c):
            raise InstabilityError(f"superluminal cell velocity at t={t1:.6g}")
        if np.any(D < 0):
            raise InstabilityError(f"negative density at t={t1:.6g}")
        v = self._source(v, th, t1)
        a1 = float(self.scale.eval_a(t1))
        rho = D / (a1 ** self.dim * self._gamma(v))
        return GridState(x=state.x, dx=state.dx, v=v, rho=rho, t=t1, cfl=state.cfl)

    # driver

    def max_compression(self, state):
        """a(t) * max(-dv/dx) from centred differences (0 if nowhere compressive)."""
        g = np.gradient(state.v, state.dx)
        return float(self.scale.eval_a(state.t)) * max(0.0, float(-np.min(g)))

    def run(self, data, N=400, x_lo=-10.0, x_hi=10.0, t_end=1.0, snapshots=10,
            monitor=1e3, indicator_factor=None, dt_rest=None):
        """Evolve to t_end with equally spaced snapshots.

        The run stops early when max |dv/dx| exceeds ``monitor`` times its
        initial value.  ``blowup_indicator`` extrapolates the compression
        history to the time where 1/(a max(-v_x)) reaches zero.
        """
        state = self.initial_state(data, N, x_lo, x_hi)
        g0 = float(np.max(np.abs(np.gradient(state.v, state.dx))))
        marks = np.linspace(0.0, t_end, snapshots + 1)
        snaps = [state.copy()]
        traj = Trajectory(snapshots=snaps)
        hist = [(0.0, self.max_compression(state))]
        k = 1
        while k < len(marks):
            dt = self.stable_dt(state)
            if not math.isfinite(dt):
                dt = dt_rest if dt_rest is not None else (marks[k] - state.t)
            target = marks[k]
            hit = state.t + dt >= target - 1e-14 * max(1.0, target)
            if hit:
                dt = target - state.t
            state = self.step(state, dt)
            if hit:
                state.t = float(target)
                snaps.append(state.copy())
                k += 1
            hist.append((state.t, self.max_compression(state)))
            grad = float(np.max(np.abs(np.gradient(state.v, state.dx))))
            if g0 > 0 and grad > monitor * g0:
                traj.monitor_fired = True
                break
            if indicator_factor is not None and hist[0][1] > 0 and hist[-1][1] > indicator_factor * hist[0][1]:
                break
        traj.stop_time = state.t
        traj.gradient_history = hist
        traj.blowup_indicator = self.extrapolate_blowup(hist)
        return traj

    def extrapolate_blowup(self, hist, window=(2.0, 8.0)):
        """Zero of the line through 1/G versus int_0^t a^-2, fitted where G/G0 is in ``window``."""
        h = np.array(hist)
        if h.shape[0] < 3 or h[0, 1] <= 0:
            return None
        t, G = h[:, 0], h[:, 1]
        sel = (G >= window[0] * G[0]) & (G <= window[1] * G[0])
        if np.count_nonzero(sel) < 3:
            return None
        phi = np.asarray(self.scale.integral_inv_power(2.0, t[sel]))
        slope, icpt = np.polyfit(phi, 1.0 / G[sel], 1)
        if slope >= 0:
            return None
        phi_star = -icpt / slope
        return _invert_phi(self.scale, phi_star)

    # comparison

    def compare(self, trajectory, flow, spherical=None):
        """L-infinity and L1 errors of v and rho against the closed form at each snapshot."""
        rows = []
        excluded = 0
        for snap in trajectory.snapshots:
            x = snap.x
            try:
                if self.geometry == "radial":
                    alpha = _invert_radial(flow, snap.t, x)
                else:
                    alpha = flow.invert_position(snap.t, x[:, None])[:, 0]
                ok = np.ones(x.size, dtype=bool)
            except (InversionError, BlownUpStateError):
                alpha, ok = _invert_cellwise(flow, snap.t, x)
            excluded += int((~ok).sum())
            v_ex = np.full(x.size, np.nan)
            r_ex = np.full(x.size, np.nan)
            if np.any(ok):
                v_ex[ok] = flow.velocity(snap.t, alpha[ok][:, None])[:, 0]
                if spherical is not None:
                    r_ex[ok] = spherical.density_closed_form(snap.t, np.abs(alpha[ok]))
                else:
                    from .density import density_closed_form
                    r_ex[ok] = density_closed_form(flow, snap.t, alpha[ok][:, None])
            ev = np.abs(snap.v - v_ex)[ok]
            er = np.abs(snap.rho - r_ex)[ok]
            rows.append({"t": snap.t, "linf_v": float(ev.max()) if ev.size else math.nan,
                         "l1_v": float(ev.sum() * snap.dx), "linf_rho": float(er.max()) if er.size else math.nan,
                         "l1_rho": float(er.sum() * snap.dx), "excluded": int((~ok).sum())})
        return {"snapshots": rows, "excluded": excluded,
                "linf_v": max(r["linf_v"] for r in rows), "linf_rho": max(r["linf_rho"] for r in rows)}


def _invert_phi(scale, phi):
    """t with int_0^t a^-2 = phi (inf if never reached)."""
    from .quadrature import bisect
    f = lambda t: float(scale.integral_inv_power(2.0, t)) - phi
    if phi <= 0:
        return 0.0
    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            return math.inf
    return bisect(f, 0.0, hi, xtol=1e-12, rtol=1e-14)


def _invert_radial(flow, t, r):
    """Labels of radii r >= 0 (the radial map is odd in the label)."""
    alpha = flow.invert_position(t, np.abs(r)[:, None])[:, 0]
    return np.sign(r) * alpha


def _invert_cellwise(flow, t, x):
    alpha = np.full(x.size, np.nan)
    ok = np.zeros(x.size, dtype=bool)
    for i, xi in enumerate(x):
        try:
            alpha[i] = float(flow.invert_position(t, np.array([xi]))[0])
            ok[i] = True
        except (InversionError, BlownUpStateError):
            pass
    return alpha, ok
