"""Blowup detection, life-span bounds and small-amplitude thresholds.

The classical solution exists as long as det(dx/dalpha) stays positive for
every label.  Writing the Jacobian as I + D F2 + E F4 (D, E depend on the
label only) turns blowup detection into root finding for a polynomial in
the two monotone time integrals F2, F4.
"""

from dataclasses import dataclass, field
import itertools
import math

import numpy as np

from .characteristics import F2, F4, integrals_at, inverse_and_det, time_integrals
from .errors import DomainError, HorizonError, PreconditionError, ResolutionError
from .initial_data import as_points
from .quadrature import bisect, cumulative

DET_TOL = 1e-8
DEFAULT_DELTA = 0.9


# analytic bounds

def case3_constant(c, M0, n, delta=DEFAULT_DELTA):
    """P = delta c^2 / (4 n M0 (c^2 + M0^2))."""
    return delta * c * c / (4.0 * n * M0 * (c * c + M0 * M0))


def omega(c, eps, M0):
    """Growth constant bounding the entries of dh/dalpha per unit of int a^-2."""
    e2 = (eps * M0) ** 2
    return 2.0 * c * eps * M0 * (c ** 4 + e2 * e2 + 2.0 * c * c * e2) / (c * c - e2) ** 2.5


def _regime_name(regime):
    name = getattr(regime, "name", regime)
    if name not in ("H1", "H2", "H3", "H4"):
        raise DomainError(f"unknown regime {regime!r}")
    return name


def lifespan_bound(regime, eps, c=1.0, M0=1.0, n=1, l=None, delta=DEFAULT_DELTA):
    """Certified lower bound on the life span; ``inf`` in the expanding regimes."""
    name = _regime_name(regime)
    if name in ("H1", "H2") or M0 == 0:
        return math.inf
    if l is None:
        l = getattr(regime, "l", None)
    if name == "H4":
        l = 0.0
    if l is None:
        raise DomainError("power-law exponent l is required in regime H3")
    P = case3_constant(c, M0, n, delta)
    if abs(l - 0.5) < 1e-15:
        return math.expm1(P / eps)
    e = 1.0 - 2.0 * l
    return math.expm1(math.log1p(e * P / eps) / e)


def _solve_cubic(M0, c, rhs):
    """Positive root of eta M0 + eta^3 M0^3 / c^2 = rhs."""
    if M0 == 0:
        return math.inf
    f = lambda x: x * M0 + x ** 3 * M0 ** 3 / (c * c) - rhs
    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
    return bisect(f, 0.0, hi, xtol=1e-12, rtol=0.0)


@dataclass(frozen=True)
class Threshold:
    name: str
    value: float
    eta: float = None

    def to_dict(self):
        return {"name": self.name, "value": self.value, "eta": self.eta}


def epsilon_threshold(regime, c=1.0, M0=1.0, n=1, delta=DEFAULT_DELTA, da0=None, delta0=None):
    """Amplitude below which the analytic argument applies (eps1, eps2 or eps3)."""
    name = _regime_name(regime)
    speed = math.inf if M0 == 0 else c * math.sqrt(1.0 - delta ** 0.4) / M0
    if name == "H1":
        if da0 is None:
            raise DomainError("H1 threshold needs the initial expansion rate da/dt(0)")
        eta = _solve_cubic(M0, c, da0 / (4.0 * n) * delta * c * c / (M0 * M0 + c * c))
        return Threshold("eps1", min(speed, eta, 1.0), eta)
    if name == "H2":
        if delta0 is None:
            delta0 = getattr(regime, "delta0", None)
        if delta0 is None:
            raise DomainError("H2 threshold needs delta0")
        eta = _solve_cubic(M0, c, delta0 / (4.0 * n) * delta * c * c / (M0 * M0 + c * c))
        return Threshold("eps2", min(speed, eta, 1.0), eta)
    return Threshold("eps3", speed)


def threshold_for(flow, delta=DEFAULT_DELTA):
    reg = flow.scale.classify()
    if reg.name is None:
        return None
    d = flow.data
    da0 = float(flow.scale.eval_da(0.0)) if reg.name == "H1" else None
    return epsilon_threshold(reg, c=d.c, M0=d.M0, n=d.n, delta=delta, da0=da0, delta0=reg.delta0)


def analytic_bound_for(flow, delta=DEFAULT_DELTA):
    reg = flow.scale.classify()
    if reg.name is None:
        return None
    d = flow.data
    return lifespan_bound(reg, d.epsilon, c=d.c, M0=d.M0, n=d.n, l=reg.l, delta=delta)


# Jacobian coefficient matrices

def coefficient_matrices(data, pts):
    """D, E with dx/dalpha = I + D F2 + E F4, for an (m, n) label array."""
    tr = data.transforms(pts)
    eps, c = data.epsilon, data.c
    K = tr.J * tr.W[:, None, None] - 0.5 * tr.v[:, :, None] * tr.dW[:, None, :]
    s32 = tr.S ** -1.5
    D = c * eps * s32[:, None, None] * (c * c * tr.J - eps * eps * K)
    E = c * eps ** 3 * s32[:, None, None] * K
    return D, E


def _perm_parity(p):
    p = list(p)
    sign = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


def permutation_det(M):
    """Leibniz determinant of the trailing n x n axes."""
    n = M.shape[-1]
    out = np.zeros(M.shape[:-2])
    for perm in itertools.permutations(range(n)):
        term = np.full(M.shape[:-2], float(_perm_parity(perm)))
        for i, j in enumerate(perm):
            term = term * M[..., i, j]
        out = out + term
    return out


def leading_coefficient_sign(data, alpha):
    """(sign, value) of the coefficient of F2^n in det(dx/dalpha)."""
    pts, single = as_points(alpha, data.n)
    D, _ = coefficient_matrices(data, pts)
    G = permutation_det(D)
    sgn = np.sign(G).astype(int)
    return (int(sgn[0]), float(G[0])) if single else (sgn, G)


def det_polynomial_coefficients(data, pts):
    """Coefficients of det(I + X s + Y r) in s = F2 - F4 >= 0 and r = F4 >= 0.

    Returns a dict {(i, j): array (m,)} for i + j <= n, with X = D, Y = D + E.
    If every coefficient is non-negative the determinant is at least 1 for
    all times.
    """
    D, E = coefficient_matrices(data, pts)
    X, Y = D, D + E
    n = data.n
    monos = [(i, j) for i in range(n + 1) for j in range(n + 1 - i)]
    nodes = [(s, r) for s in range(n + 1) for r in range(n + 1 - s)]
    V = np.array([[s ** i * r ** j for (i, j) in monos] for (s, r) in nodes], dtype=float)
    eye = np.eye(n)
    vals = np.stack([inverse_and_det(eye + X * s + Y * r)[1] for (s, r) in nodes], axis=0)
    coef = np.linalg.solve(V, vals)
    return {m: coef[k] for k, m in enumerate(monos)}


def positive_certificate(data, pts, tol=1e-12):
    coefs = det_polynomial_coefficients(data, pts)
    worst = min(float(np.min(v)) for k, v in coefs.items() if k != (0, 0))
    return worst >= -tol, worst


# det along characteristics with per-label times

def _det_matrix(flow, tr, F2v, F4v):
    c = flow.c
    Jv = F2v + tr.q * F4v
    M = (np.eye(flow.n) + c * tr.dg0 * Jv[..., None, None]
         - 0.5 * c * (tr.g0[..., :, None] * tr.dq[..., None, :]) * F4v[..., None, None])
    return M


def det_at(flow, tr, t_each):
    ints = integrals_at(flow.scale, tr.q, t_each, (F2, F4))
    return inverse_and_det(_det_matrix(flow, tr, ints[F2], ints[F4]))[1]


def det_grid(flow, tr, times):
    """det on a (T, m) grid for fixed labels."""
    ints = time_integrals(flow.scale, tr.q, times, (F2, F4), rtol=flow.rtol)
    M = _det_matrix(flow, tr, ints[F2], ints[F4])
    return inverse_and_det(M)[1]


def _take(tr, idx):
    from .initial_data import Transforms
    return Transforms(**{k: getattr(tr, k)[idx] for k in tr.__dataclass_fields__})


def _bisect_batch(flow, tr, lo, hi, rtol=1e-10, tol=DET_TOL, maxiter=200):
    """Shrink [lo, hi] with det(lo) > 0 >= det(hi) for each label."""
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        d = det_at(flow, tr, mid)
        pos = d > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all(hi - lo <= rtol * hi) and np.all(np.abs(d) <= tol):
            break
        if np.all(hi - lo <= 4e-16 * hi):
            break
    return hi


def _golden_min_batch(flow, tr, lo, hi, iters=80):
    """Minimise det over [lo, hi] per label (in log-time) by golden sections."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = np.log1p(lo), np.log1p(hi)
    x1 = b - g * (b - a)
    x2 = a + g * (b - a)
    f1 = det_at(flow, tr, np.expm1(x1))
    f2 = det_at(flow, tr, np.expm1(x2))
    for _ in range(iters):
        left = f1 < f2
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        nx1 = b - g * (b - a)
        nx2 = a + g * (b - a)
        x1n = np.where(left, nx1, x2)
        x2n = np.where(left, x1, nx2)
        f1n = np.where(left, np.nan, f2)
        f2n = np.where(left, f1, np.nan)
        need1 = np.isnan(f1n)
        need2 = np.isnan(f2n)
        evals = np.where(need1, x1n, x2n)
        fe = det_at(flow, tr, np.expm1(evals))
        f1 = np.where(need1, fe, f1n)
        f2 = np.where(need2, fe, f2n)
        x1, x2 = x1n, x2n
        if np.all(b - a <= 1e-13 * np.maximum(1.0, b)):
            break
    xm = np.where(f1 < f2, x1, x2)
    return np.expm1(xm), np.minimum(f1, f2)


def first_zero_times(flow, pts, times, tol=DET_TOL, t_rtol=1e-10, tr=None, dets=None):
    """First time det <= tol for each label, or inf.  Returns (t0, kind).

    ``kind`` is 0 for none, 1 for a sign change, 2 for a tangential touch.
    """
    tr = flow.data.transforms(pts) if tr is None else tr
    dets = det_grid(flow, tr, times) if dets is None else dets
    m = pts.shape[0]
    out = np.full(m, math.inf)
    kind = np.zeros(m, dtype=int)
    neg = dets <= 0
    has = neg.any(axis=0)
    first = np.where(has, np.argmax(neg, axis=0), -1)
    # touches: interior local minima of det that come close to zero
    touch_t = np.full(m, math.inf)
    interior = (dets[1:-1] <= dets[:-2]) & (dets[1:-1] <= dets[2:]) & (dets[1:-1] < 0.05)
    cand = interior.any(axis=0)
    if np.any(cand):
        idx = np.nonzero(cand)[0]
        # take the earliest local minimum per label
        k = np.argmax(interior[:, idx], axis=0) + 1
        stop = np.where(has[idx], first[idx], dets.shape[0])
        ok = k < stop
        idx, k = idx[ok], k[ok]
        if idx.size:
            trk = _take(tr, idx)
            tmin, fmin = _golden_min_batch(flow, trk, times[k - 1], times[k + 1])
            hit = fmin <= tol
            touch_t[idx[hit]] = tmin[hit]
    if np.any(has):
        idx = np.nonzero(has & (first > 0))[0]
        if idx.size:
            trk = _take(tr, idx)
            root = _bisect_batch(flow, trk, times[first[idx] - 1], times[first[idx]], rtol=t_rtol, tol=tol)
            out[idx] = root
            kind[idx] = 1
    better = touch_t < out
    out = np.where(better, touch_t, out)
    kind = np.where(better, 2, kind)
    return out, kind


def _alpha_grid(box, grid, n):
    lo, hi = box
    axis = np.linspace(lo, hi, grid)
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def _time_grid(t_max, points):
    return np.expm1(np.linspace(0.0, math.log1p(t_max), points))


def _relevant_jumps(dets):
    """|det jumps| on intervals where det is small, up to each label's first non-positive sample."""
    T = dets.shape[0]
    nonpos = dets <= 0
    first = np.where(nonpos.any(axis=0), np.argmax(nonpos, axis=0), T)
    before = np.arange(T - 1)[:, None] < first[None, :]
    near = (np.minimum(dets[:-1], dets[1:]) < 1.0) & before
    return np.where(near, np.abs(np.diff(dets, axis=0)), 0.0)


def _refine_times(flow, tr, times, max_rounds=8, fine=0.05, coarse=0.5):
    """Insert midpoints where det is small and moves fast between samples."""
    dets = det_grid(flow, tr, times)
    for _ in range(max_rounds):
        jump = _relevant_jumps(dets).max(axis=1)
        bad = jump > fine
        if not np.any(bad):
            return times, dets
        tau = np.log1p(times)
        mids = 0.5 * (tau[:-1][bad] + tau[1:][bad])
        times = np.expm1(np.sort(np.concatenate([tau, mids])))
        dets = det_grid(flow, tr, times)
    jump = _relevant_jumps(dets).max()
    if jump > coarse:
        raise ResolutionError(f"det jumps by {jump:.3g} between samples; refine the grids")
    return times, dets


@dataclass
class BlowupReport:
    verdict: str
    t_blow: object
    alpha_star: object
    det_trace: list
    analytic_bound: object
    epsilon_threshold: object
    regime: object = None
    certificate: dict = field(default_factory=dict)

    def to_dict(self):
        def num(x):
            if x is None:
                return None
            x = float(x)
            return "inf" if math.isinf(x) else x
        thr = self.epsilon_threshold
        return {
            "verdict": self.verdict,
            "t_blow": num(self.t_blow),
            "alpha_star": None if self.alpha_star is None else [float(a) for a in self.alpha_star],
            "analytic_bound": num(self.analytic_bound),
            "analytic_bound_kind": "lower bound",
            "epsilon_threshold": None if thr is None else thr.to_dict(),
            "regime": self.regime,
            "certificate": self.certificate,
            "trace": [[float(t), float(d)] for t, d in self.det_trace],
        }


def dominance_check(flow, samples=1000, t_max=1e6, box=(-5.0, 5.0), seed=0):
    """Largest |dh^i/dalpha^j| and smallest det over random (t, alpha) samples."""
    rng = np.random.default_rng(seed)
    n = flow.n
    pts = rng.uniform(box[0], box[1], size=(samples, n))
    ts = np.expm1(rng.uniform(0.0, math.log1p(t_max), size=samples))
    tr = flow.data.transforms(pts)
    ints = integrals_at(flow.scale, tr.q, ts, (F2, F4), rtol=1e-10)
    M = _det_matrix(flow, tr, ints[F2], ints[F4])
    dh = M - np.eye(n)
    det = inverse_and_det(M)[1]
    off = dh.copy()
    off[:, np.arange(n), np.arange(n)] = 0.0
    return {"max_entry": float(np.max(np.abs(dh))), "max_offdiag": float(np.max(np.abs(off))),
            "min_det": float(np.min(det)), "limit": 1.0 / (2 * n), "samples": samples}


def find_blowup_time(flow, t_max=1e6, alpha_box=(-5.0, 5.0), grid=41, time_points=257,
                     rounds=3, tol=DET_TOL, t_rtol=1e-8, delta=DEFAULT_DELTA, seed=0):
    """Search the first zero of det(dx/dalpha) over a label box."""
    data = flow.data
    n = flow.n
    reg = flow.scale.classify()
    thr = threshold_for(flow, delta) if reg.name is not None else None
    bound = analytic_bound_for(flow, delta) if reg.name is not None else None
    regime = None if reg.name is None else reg.name
    pts = _alpha_grid(alpha_box, grid, n)
    tr = data.transforms(pts)
    if data.is_zero:
        trace = [(0.0, 1.0), (float(t_max), 1.0)]
        return BlowupReport("global", None, None, trace, math.inf, thr, regime,
                            {"kind": "zero-data"})
    times, dets = _refine_times(flow, tr, _time_grid(t_max, time_points))
    mins = dets.min(axis=1)
    t0, kind = first_zero_times(flow, pts, times, tol=tol, t_rtol=t_rtol, tr=tr, dets=dets)
    if not np.any(np.isfinite(t0)):
        trace = list(zip(times.tolist(), mins.tolist()))
        cert = {}
        if reg.name in ("H1", "H2") and thr is not None and data.epsilon <= thr.value:
            dom = dominance_check(flow, t_max=max(t_max, 1e6), box=alpha_box, seed=seed)
            if dom["max_entry"] <= dom["limit"] and dom["min_det"] > 0:
                cert = {"kind": "threshold-dominance", "threshold": thr.to_dict(), "dominance": dom}
                return BlowupReport("global", None, None, trace, bound, thr, regime, cert)
        ok, worst = positive_certificate(data, pts)
        cert = {"kind": "polynomial-coefficients", "positive": bool(ok), "worst_coefficient": worst,
                "min_det": float(mins.min())}
        return BlowupReport("undetermined-horizon", None, None, trace, bound, thr, regime, cert)

    j = int(np.argmin(t0))
    best_a = pts[j].copy()
    best_t = float(t0[j])
    best_kind = int(kind[j])
    h = (alpha_box[1] - alpha_box[0]) / (grid - 1)
    for _ in range(rounds):
        for d in range(n):
            cand = np.repeat(best_a[None], 9, axis=0)
            cand[:, d] = np.clip(best_a[d] + np.linspace(-h, h, 9), alpha_box[0], alpha_box[1])
            ctimes = times[times < best_t * 1.5]
            ctimes = np.append(ctimes, best_t * 1.5)
            ct, ck = first_zero_times(flow, cand, ctimes, tol=tol, t_rtol=t_rtol)
            k = int(np.argmin(ct))
            if ct[k] < best_t:
                best_t, best_a, best_kind = float(ct[k]), cand[k].copy(), int(ck[k])
        h = h / 3.0
    # trace up to the blowup time, det strictly positive before it
    keep = times < best_t
    trace = list(zip(times[keep].tolist(), mins[keep].tolist()))
    final = float(det_at(flow, data.transforms(best_a[None]), np.array([best_t]))[0])
    trace.append((best_t, min(final, float(mins[keep].min()) if keep.any() else final)))
    cert = {"kind": "sign-change" if best_kind == 1 else "tangential-touch", "det_at_t_blow": final}
    if best_t > t_max:
        return BlowupReport("undetermined-horizon", None, None, trace, bound, thr, regime, cert)
    return BlowupReport("blowup", best_t, best_a, trace, bound, thr, regime, cert)


# one space dimension

def _f2_power_series(l, q, t, terms=200):
    """int_0^t (1+s)^-2l (1 + q (1+s)^-2l)^-3/2 ds as a binomial series (q < 1)."""
    p = 2.0 * l
    L = math.log1p(t)
    total = 0.0
    coef = 1.0
    for k in range(terms):
        e = 1.0 - p * (1 + k)
        term = L if abs(e) < 1e-14 else math.expm1(e * L) / e
        add = coef * q ** k * term
        total += add
        if k > 3 and abs(add) <= 1e-17 * abs(total):
            break
        coef *= (-1.5 - k) / (k + 1)
    return total


def f2_scalar(scale, q, t):
    """F2(t; q) for one label; closed series for power laws when q < 1/2."""
    if t == 0:
        return 0.0
    if scale.kind == "power" and q < 0.5:
        if scale.l == 0.0:
            return t / (1.0 + q) ** 1.5
        return _f2_power_series(scale.l, q, t)
    return float(time_integrals(scale, np.array([q]), np.array([t]), (F2,), rtol=1e-13)[F2][0, 0])


def scalar_blowup_time_1d(scale, data, alpha, exact=True, t_cap=1e300):
    """First zero of dx/dalpha = 1 + c g0'(alpha) F2(t) in one dimension.

    With ``exact=False`` the classical estimate that drops the q dependence
    of F2 and rescales by (1 + f0^2)^(3/2) is returned instead.
    """
    if data.n != 1:
        raise DomainError("scalar_blowup_time_1d needs n = 1")
    a = float(alpha)
    tr = data.transforms(np.array([[a]]))
    dv = float(tr.J[0, 0, 0])
    if dv >= 0:
        return math.inf
    eps, c = data.epsilon, data.c
    q = float(tr.q[0])
    reg = scale.classify()
    if not exact:
        if reg.name not in ("H3", "H4"):
            raise DomainError("the classical estimate applies to regimes H3 and H4")
        l = reg.l
        x = -(1.0 + q) ** 1.5 / (eps * dv)
        if abs(l - 0.5) < 1e-15:
            return math.expm1(x)
        e = 1.0 - 2.0 * l
        return math.expm1(math.log1p(e * x) / e)
    target = -1.0 / (c * float(tr.dg0[0, 0, 0]))
    if scale.kind == "power" and scale.l == 0.0:
        return target * (1.0 + q) ** 1.5
    f = lambda t: f2_scalar(scale, q, t) - target
    hi = 1.0
    prev = -math.inf
    while True:
        val = f(hi)
        if val > 0:
            break
        # F2 has saturated below the target: no finite zero
        if val - prev <= 1e-15 * abs(target):
            return math.inf
        prev = val
        hi *= 4.0
        if hi > t_cap:
            return math.inf
    lo = 0.0 if hi == 1.0 else hi / 4.0
    # bisect in log-time for uniform relative resolution
    g = lambda x: f(math.expm1(x))
    return math.expm1(bisect(g, math.log1p(lo), math.log1p(hi), xtol=0.0, rtol=1e-15))


@dataclass(frozen=True)
class Certificate:
    alpha: tuple
    G: float
    bracket: tuple
    t_cross: float
    kind: str


def theorem2_blowup_certificate(flow, alpha, t_max, strict=True, tol=DET_TOL, points=513):
    """Bracket the first time det(dx/dalpha) reaches zero at one label.

    With ``strict`` the leading coefficient of det in F2 must be negative, which
    forces a crossing once F2 is large.  Otherwise touches are accepted too.
    """
    reg = flow.scale.classify()
    if reg.name not in ("H3", "H4"):
        raise PreconditionError("the finite-time certificate needs regime H3 or H4")
    pts, _ = as_points(alpha, flow.n)
    sgn, G = leading_coefficient_sign(flow.data, pts)
    G = float(G[0]) if np.ndim(G) else float(G)
    if strict and not G < 0:
        raise PreconditionError(f"leading coefficient is {G:.3e}, not negative")
    times = _time_grid(t_max, points)
    tr = flow.data.transforms(pts)
    times, dets = _refine_times(flow, tr, times)
    t0, kind = first_zero_times(flow, pts, times, tol=tol, t_rtol=1e-12, tr=tr, dets=dets)
    t_cross = float(t0[0])
    if not math.isfinite(t_cross):
        F2max = float(time_integrals(flow.scale, tr.q, np.array([t_max]), (F2,))[F2][0, 0])
        projected = None
        if G < 0:
            projected = (1.0 / abs(G)) ** (1.0 / flow.n)
        raise HorizonError(f"no zero of det before t_max={t_max!r}", F2_at_horizon=F2max,
                           projected=projected)
    if kind[0] == 1:
        lo = t_cross * (1 - 1e-10)
        bracket = (lo, t_cross)
    else:
        # widen until det exceeds tol on both sides
        span = max(t_cross * 1e-6, 1e-12)
        lo, hi = t_cross, t_cross
        d = lambda t: float(det_at(flow, tr, np.array([t]))[0])
        while lo > 0 and d(lo) <= tol:
            lo = max(0.0, lo - span)
            span *= 2
        span = max(t_cross * 1e-6, 1e-12)
        while d(hi) <= tol and hi < t_max:
            hi = hi + span
            span *= 2
        bracket = (lo, hi)
    return Certificate(alpha=tuple(pts[0].tolist()), G=G, bracket=bracket, t_cross=t_cross,
                       kind="sign-change" if kind[0] == 1 else "tangential-touch")
