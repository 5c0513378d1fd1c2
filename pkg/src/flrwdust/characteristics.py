"""Closed-form characteristic flow of the relativistic Burgers system.

Along the characteristic through label alpha the momentum equation
integrates exactly.  Writing A = 1/a(t) and q = f0(alpha)^2,

    u   = |v|^2 = c^2 q A^2 / (1 + q A^2)
    v   = c g0 A / sqrt(1 + q A^2)
    x   = alpha + c g0 I(2, 1/2)

with the time integrals I(k, m)(t) = int_0^t a^-k (1 + q a^-2)^-m ds.  We use
the shorthands F2 = I(2, 3/2), F4 = I(4, 3/2) and F6 = I(6, 5/2); note
I(2, 1/2) = F2 + q F4 and dI(k, m)/dq = -m I(k+2, m+1).
"""

from dataclasses import dataclass
import threading

import numpy as np

from .errors import BlownUpStateError, DomainError, InversionError
from .initial_data import as_points
from .quadrature import cumulative

# (k, m) pairs of the integrals used by the flow and its derivatives
F2 = (2, 1.5)
F4 = (4, 1.5)
F6 = (6, 2.5)
I45 = (4, 2.5)
I2H = (2, 0.5)


def time_integrals(scale, q, times, pairs, rtol=1e-10, atol=1e-14, max_panels=10_000):
    """I(k, m) for every label weight ``q`` (m,) at every time (T,).

    Returns a dict keyed by the (k, m) pairs with arrays of shape (T, m).
    Quadrature runs in log-time tau = ln(1+s), where all integrands are
    smooth and slowly varying.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0) or np.any(~np.isfinite(times)):
        raise DomainError("times must be finite and non-negative")
    pairs = list(pairs)
    if scale.kind == "power" and scale.l == 0.0:
        return {p: times[:, None] / (1.0 + q[None, :]) ** p[1] for p in pairs}
    order = np.argsort(times, kind="stable")
    tau = np.concatenate([[0.0], np.log1p(times[order])])
    ks = np.array([p[0] for p in pairs], dtype=float)
    ms = np.array([p[1] for p in pairs], dtype=float)

    def integrand(x):
        s = np.expm1(x)
        la = np.asarray(scale.log_scale(s))                 # (N,)
        w = q[None, :] * np.exp(-2.0 * la)[:, None]          # (N, m)
        base = np.exp(x[:, None] - ks[None, :] * la[:, None])  # (N, P)
        return base[:, :, None] * (1.0 + w[:, None, :]) ** (-ms[None, :, None])

    vals = cumulative(integrand, tau, rtol=rtol, atol=atol, max_panels=max_panels)[1:]
    out = {}
    for j, p in enumerate(pairs):
        arr = np.empty((times.size, q.size))
        arr[order] = vals[:, j, :]
        out[p] = arr
    return out


def integrals_between(scale, q, t_lo, t_hi, pairs, rtol=1e-12):
    """I(k, m) over [t_lo[j], t_hi[j]] for label weight q[j]; arrays of shape (m,)."""
    q = np.asarray(q, dtype=float)
    t_lo = np.broadcast_to(np.asarray(t_lo, dtype=float), q.shape)
    t_hi = np.broadcast_to(np.asarray(t_hi, dtype=float), q.shape)
    pairs = list(pairs)
    if scale.kind == "power" and scale.l == 0.0:
        return {p: (t_hi - t_lo) / (1.0 + q) ** p[1] for p in pairs}
    L0 = np.log1p(t_lo)
    L = np.log1p(t_hi) - L0
    ks = np.array([p[0] for p in pairs], dtype=float)
    ms = np.array([p[1] for p in pairs], dtype=float)

    def integrand(theta):
        tau = L0[None, :] + theta[:, None] * L[None, :]        # (N, m)
        la = np.asarray(scale.log_scale(np.expm1(tau)))
        w = q[None, :] * np.exp(-2.0 * la)
        base = np.exp(tau[:, None, :] - ks[None, :, None] * la[:, None, :])
        return base * (1.0 + w[:, None, :]) ** (-ms[None, :, None]) * L[None, None, :]

    vals = cumulative(integrand, np.array([0.0, 1.0]), rtol=rtol, atol=1e-300)[-1]
    return {p: vals[j] for j, p in enumerate(pairs)}


def integrals_at(scale, q, t_each, pairs, rtol=1e-12):
    """I(k, m) for label j up to its own time t_each[j]."""
    return integrals_between(scale, q, 0.0, t_each, pairs, rtol=rtol)


def inverse_and_det(M):
    """Cofactor inverse and determinant of a stack of 1x1, 2x2 or 3x3 matrices."""
    M = np.asarray(M, dtype=float)
    n = M.shape[-1]
    if n == 1:
        det = M[..., 0, 0]
        adj = np.ones_like(M)
    elif n == 2:
        det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
        adj = np.empty_like(M)
        adj[..., 0, 0] = M[..., 1, 1]
        adj[..., 1, 1] = M[..., 0, 0]
        adj[..., 0, 1] = -M[..., 0, 1]
        adj[..., 1, 0] = -M[..., 1, 0]
    elif n == 3:
        c0 = np.cross(M[..., 1, :], M[..., 2, :])
        c1 = np.cross(M[..., 2, :], M[..., 0, :])
        c2 = np.cross(M[..., 0, :], M[..., 1, :])
        det = np.sum(M[..., 0, :] * c0, axis=-1)
        adj = np.stack([c0, c1, c2], axis=-1)
    else:
        raise DomainError("only n <= 3 is supported")
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = adj / det[..., None, None]
    return inv, det


def determinant(M):
    return inverse_and_det(M)[1]


def inverse_hessian_bound(n, N, M):
    """Bound on |d^2 alpha / dx^2| given |det dx/dalpha| >= N and C2 bounds M."""
    from math import factorial
    fn = factorial(n)
    fn1 = factorial(n - 1)
    first = (fn ** 2 * M ** (2 * n - 1) / N ** 2 + (n - 1) * fn1 * M ** (n - 1) / N)
    return first * (fn1 * M ** (n - 1) / N)


@dataclass(frozen=True)
class JacobianEval:
    matrix: np.ndarray
    det: float
    t: float
    alpha: np.ndarray


@dataclass
class FlowBatch:
    """Flow quantities on a (T, m) grid of times and labels."""

    times: np.ndarray
    pts: np.ndarray
    tr: object
    A: np.ndarray            # (T,)
    ints: dict               # (k, m) -> (T, m)

    def get(self, pair):
        return self.ints[pair]


class CharacteristicFlow:
    """Exact characteristic solution for a scale factor and Cauchy data."""

    def __init__(self, scale, data, rtol=1e-10, cache_size=32):
        self.scale = scale
        self.data = data
        self.rtol = rtol
        self._cache = {}
        self._cache_order = []
        self._cache_size = cache_size
        self._lock = threading.Lock()

    def __getstate__(self):
        st = self.__dict__.copy()
        st["_cache"] = {}
        st["_cache_order"] = []
        del st["_lock"]
        return st

    def __setstate__(self, st):
        self.__dict__.update(st)
        self._lock = threading.Lock()

    @property
    def n(self):
        return self.data.n

    @property
    def c(self):
        return self.data.c

    # integrals with a small per-instance cache

    def integrals(self, times, q, pairs):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        q = np.atleast_1d(np.asarray(q, dtype=float))
        key = (times.tobytes(), q.tobytes(), tuple(pairs))
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        res = time_integrals(self.scale, q, times, pairs, rtol=self.rtol)
        with self._lock:
            self._cache[key] = res
            self._cache_order.append(key)
            while len(self._cache_order) > self._cache_size:
                self._cache.pop(self._cache_order.pop(0), None)
        return res

    def batch(self, times, pts, pairs=(F2, F4), tr=None):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if np.any(times < 0):
            raise DomainError("time must be non-negative")
        tr = self.data.transforms(pts) if tr is None else tr
        ints = self.integrals(times, tr.q, pairs)
        A = np.asarray(self.scale.inv_power(1.0, times))
        return FlowBatch(times=times, pts=pts, tr=tr, A=A, ints=ints)

    # batch kernels, all returning (T, m, ...) arrays

    def _speed_sq(self, A, tr):
        w = tr.q[None, :] * A[:, None] ** 2
        return self.c ** 2 * w / (1.0 + w)

    def _velocity(self, A, tr):
        w = tr.q[None, :] * A[:, None] ** 2
        return self.c * tr.g0[None] * (A[:, None] / np.sqrt(1.0 + w))[:, :, None]

    def _position(self, fb):
        J = fb.ints[F2] + fb.tr.q[None, :] * fb.ints[F4]
        return fb.pts[None] + self.c * fb.tr.g0[None] * J[:, :, None]

    def _jacobian(self, fb):
        tr = fb.tr
        n = self.n
        J = fb.ints[F2] + tr.q[None, :] * fb.ints[F4]
        M = (self.c * tr.dg0[None] * J[:, :, None, None]
             - 0.5 * self.c * (tr.g0[:, :, None] * tr.dq[:, None, :])[None] * fb.ints[F4][:, :, None, None])
        return M + np.eye(n)

    def _velocity_alpha(self, A, tr):
        """dv/dalpha (T, m, n, n) and d2v/dalpha2 (T, m, n, n, n)."""
        c = self.c
        A2 = (A ** 2)[:, None]
        w = tr.q[None, :] * A2
        phi = (1.0 + w) ** -0.5
        phq = -0.5 * A2 * (1.0 + w) ** -1.5
        phqq = 0.75 * A2 ** 2 * (1.0 + w) ** -2.5
        cA = c * A[:, None, None, None]
        dv = cA * (tr.dg0[None] * phi[:, :, None, None]
                   + (tr.g0[:, :, None] * tr.dq[:, None, :])[None] * phq[:, :, None, None])
        g, dg, dq = tr.g0, tr.dg0, tr.dq
        cross = (dg[:, :, :, None] * dq[:, None, None, :] + dg[:, :, None, :] * dq[:, None, :, None]
                 + g[:, :, None, None] * tr.d2q[:, None, :, :])
        quad = g[:, :, None, None] * dq[:, None, :, None] * dq[:, None, None, :]
        d2v = c * A[:, None, None, None, None] * (
            tr.d2g0[None] * phi[:, :, None, None, None]
            + cross[None] * phq[:, :, None, None, None]
            + quad[None] * phqq[:, :, None, None, None])
        return dv, d2v

    def _position_hessian(self, fb):
        tr = fb.tr
        c = self.c
        J = fb.ints[F2] + tr.q[None, :] * fb.ints[F4]
        F4v, F6v = fb.ints[F4], fb.ints[F6]
        g, dg, dq = tr.g0, tr.dg0, tr.dq
        cross = (dg[:, :, :, None] * dq[:, None, None, :] + dg[:, :, None, :] * dq[:, None, :, None]
                 + g[:, :, None, None] * tr.d2q[:, None, :, :])
        quad = g[:, :, None, None] * dq[:, None, :, None] * dq[:, None, None, :]
        return c * (tr.d2g0[None] * J[:, :, None, None, None]
                    - 0.5 * cross[None] * F4v[:, :, None, None, None]
                    + 0.75 * quad[None] * F6v[:, :, None, None, None])

    # public single-time API

    def _prep(self, t, alpha):
        t = float(t)
        if not t >= 0:
            raise DomainError("time must be non-negative")
        pts, single = as_points(alpha, self.n)
        return t, pts, single

    def speed_squared(self, t, alpha):
        t, pts, single = self._prep(t, alpha)
        tr = self.data.transforms(pts)
        A = np.atleast_1d(self.scale.inv_power(1.0, t))
        u = self._speed_sq(A, tr)[0]
        return float(u[0]) if single else u

    def velocity(self, t, alpha):
        t, pts, single = self._prep(t, alpha)
        tr = self.data.transforms(pts)
        A = np.atleast_1d(self.scale.inv_power(1.0, t))
        v = self._velocity(A, tr)[0]
        return v[0] if single else v

    def position(self, t, alpha):
        t, pts, single = self._prep(t, alpha)
        x = self._position(self.batch(t, pts))[0]
        return x[0] if single else x

    def jacobian_matrix(self, t, alpha):
        t, pts, single = self._prep(t, alpha)
        M = self._jacobian(self.batch(t, pts))[0]
        return M[0] if single else M

    def jacobian(self, t, alpha):
        t, pts, single = self._prep(t, alpha)
        M = self._jacobian(self.batch(t, pts))[0]
        det = determinant(M)
        if single:
            return JacobianEval(matrix=M[0], det=float(det[0]), t=t, alpha=pts[0])
        return JacobianEval(matrix=M, det=det, t=t, alpha=pts)

    def velocity_alpha(self, t, alpha):
        """(dv/dalpha, d2v/dalpha2) at one time."""
        t, pts, single = self._prep(t, alpha)
        tr = self.data.transforms(pts)
        A = np.atleast_1d(self.scale.inv_power(1.0, t))
        dv, d2v = self._velocity_alpha(A, tr)
        return (dv[0, 0], d2v[0, 0]) if single else (dv[0], d2v[0])

    def _inverse_checked(self, t, pts, M):
        inv, det = inverse_and_det(M)
        if np.any(det <= 0):
            k = int(np.argmin(det))
            raise BlownUpStateError(t, pts[k].tolist(), float(det[k]))
        return inv, det

    def velocity_gradient(self, t, alpha):
        """dv/dx = (dv/dalpha)(dx/dalpha)^-1."""
        t, pts, single = self._prep(t, alpha)
        fb = self.batch(t, pts)
        inv, _ = self._inverse_checked(t, pts, self._jacobian(fb)[0])
        dv, _ = self._velocity_alpha(fb.A, fb.tr)
        out = np.einsum("mil,mlj->mij", dv[0], inv)
        return out[0] if single else out

    def position_hessian(self, t, alpha):
        t, pts, single = self._prep(t, alpha)
        Hx = self._position_hessian(self.batch(t, pts, pairs=(F2, F4, F6)))[0]
        return Hx[0] if single else Hx

    def inverse_hessian(self, t, alpha):
        """d2 alpha^i / dx^j dx^k at the point x(t, alpha)."""
        t, pts, single = self._prep(t, alpha)
        fb = self.batch(t, pts, pairs=(F2, F4, F6))
        B, _ = self._inverse_checked(t, pts, self._jacobian(fb)[0])
        Hx = self._position_hessian(fb)[0]
        out = -np.einsum("mia,mabc,mbj,mck->mijk", B, Hx, B, B)
        return out[0] if single else out

    def spatial_derivatives(self, t, pts):
        """Batch (B, dv/dx, d2v/dx2, det) at one time for an (m, n) label array."""
        fb = self.batch(t, pts, pairs=(F2, F4, F6))
        B, det = self._inverse_checked(t, pts, self._jacobian(fb)[0])
        Hx = self._position_hessian(fb)[0]
        dv, d2v = self._velocity_alpha(fb.A, fb.tr)
        dv, d2v = dv[0], d2v[0]
        d2a = -np.einsum("mia,mabc,mbj,mck->mijk", B, Hx, B, B)
        vx = np.einsum("mia,maj->mij", dv, B)
        vxx = (np.einsum("miab,maj,mbk->mijk", d2v, B, B)
               + np.einsum("mia,majk->mijk", dv, d2a))
        return B, vx, vxx, det

    def invert_position(self, t, x, alpha0=None, tol=1e-9, maxiter=100):
        """Label alpha with position(t, alpha) = x, by damped Newton iteration."""
        t, xs, single = self._prep(t, x)
        alpha = xs.copy() if alpha0 is None else as_points(alpha0, self.n)[0].copy()
        goal = tol * (1.0 + np.linalg.norm(xs, axis=1))
        for _ in range(maxiter):
            fb = self.batch(t, alpha)
            res = self._position(fb)[0] - xs
            err = np.linalg.norm(res, axis=1)
            if np.all(err <= goal):
                break
            inv, det = inverse_and_det(self._jacobian(fb)[0])
            step = np.einsum("mij,mj->mi", inv, res)
            step = np.where(np.isfinite(step) & (det[:, None] > 0), step, res)
            lam = np.ones(len(alpha))
            trial = alpha - step
            for _ in range(30):
                tres = self._position(self.batch(t, trial))[0] - xs
                terr = np.linalg.norm(tres, axis=1)
                worse = (terr > err) & (err > goal)
                if not np.any(worse):
                    break
                lam = np.where(worse, 0.5 * lam, lam)
                trial = alpha - lam[:, None] * step
            alpha = trial
        fb = self.batch(t, alpha)
        if not np.all(np.linalg.norm(self._position(fb)[0] - xs, axis=1) <= goal):
            raise InversionError(f"Newton inversion did not converge at t={t!r}")
        det = determinant(self._jacobian(fb)[0])
        if np.any(det <= 0):
            k = int(np.argmin(det))
            raise BlownUpStateError(t, alpha[k].tolist(), float(det[k]))
        return alpha[0] if single else alpha


def flow_derivatives(flow, tr, pts, times, second=True):
    """Velocity, Jacobian and spatial velocity derivatives on a (T, m) grid.

    Returns a dict with ``u`` (T, m), ``v`` (T, m, n), ``M`` (T, m, n, n),
    ``det`` (T, m), ``vx`` (T, m, n, n) and, with ``second``, ``vxx``
    (T, m, n, n, n).
    """
    pairs = (F2, F4, F6) if second else (F2, F4)
    fb = FlowBatch(times=times, pts=pts, tr=tr, A=np.asarray(flow.scale.inv_power(1.0, times)),
                   ints=time_integrals(flow.scale, tr.q, times, pairs, rtol=flow.rtol))
    M = flow._jacobian(fb)
    B, det = inverse_and_det(M)
    dv, d2v = flow._velocity_alpha(fb.A, tr)
    out = {"u": flow._speed_sq(fb.A, tr), "v": flow._velocity(fb.A, tr), "M": M, "det": det,
           "vx": np.einsum("...ia,...aj->...ij", dv, B)}
    if second:
        Hx = flow._position_hessian(fb)
        d2a = -np.einsum("...ia,...abc,...bj,...ck->...ijk", B, Hx, B, B)
        out["vxx"] = (np.einsum("...iab,...aj,...bk->...ijk", d2v, B, B)
                      + np.einsum("...ia,...ajk->...ijk", dv, d2a))
    return out
