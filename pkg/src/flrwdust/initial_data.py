"""Cauchy data (rho0, v0) and the Lorentz-weighted transforms f0, g0.

Velocity profiles are vectorised: called on an ``(m, n)`` array of labels
they return ``(v, J, H)`` with shapes ``(m, n)``, ``(m, n, n)`` and
``(m, n, n, n)``, where ``J[:, i, j] = d v^i / d alpha^j`` and
``H[:, i, j, k] = d^2 v^i / d alpha^j d alpha^k``.

With W = |v0|^2 and S = c^2 - eps^2 W the transforms are

    g0 = eps v0 / sqrt(S),   f0 = |g0|,   q = f0^2 = eps^2 W / S.

q is smooth even where v0 vanishes, so the closed-form flow is written in
terms of q and g0; f0 derivatives are only formed on request.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ConfigurationError, DomainError, SuperluminalDataError

_ARCTAN_D2_SUP = 3.0 * math.sqrt(3.0) / 8.0  # sup |d^2 arctan|, attained at 1/sqrt(3)


def as_points(alpha, n):
    """Return ``(pts, single)`` with ``pts`` of shape (m, n)."""
    a = np.asarray(alpha, dtype=float)
    if a.ndim == 0:
        if n != 1:
            raise DomainError(f"scalar label given for n={n}")
        return a.reshape(1, 1), True
    if a.ndim == 1:
        if n == 1 and a.shape[0] != 1:
            return a.reshape(-1, 1), False
        if a.shape[0] != n:
            raise DomainError(f"label has {a.shape[0]} components, expected {n}")
        return a.reshape(1, n), True
    if a.shape[-1] != n:
        raise DomainError(f"labels have {a.shape[-1]} components, expected {n}")
    return a.reshape(-1, n), False


# velocity profiles

class Profile:
    """Base class for velocity profiles.  ``bound`` is a declared C2 norm or None."""

    name = "profile"

    def __call__(self, pts):
        raise NotImplementedError

    def bound(self, n):
        return None

    def params(self):
        return {}


class Zero(Profile):
    name = "zero"

    def __call__(self, pts):
        m, n = pts.shape
        return np.zeros((m, n)), np.zeros((m, n, n)), np.zeros((m, n, n, n))

    def bound(self, n):
        return 0.0


class Linear(Profile):
    """v0^i = slope * alpha^i (unbounded unless slope is 0)."""

    name = "linear"

    def __init__(self, slope=1.0):
        self.slope = float(slope)

    def __call__(self, pts):
        m, n = pts.shape
        J = np.broadcast_to(self.slope * np.eye(n), (m, n, n)).copy()
        return self.slope * pts, J, np.zeros((m, n, n, n))

    def bound(self, n):
        return 0.0 if self.slope == 0 else math.inf

    def params(self):
        return {"slope": self.slope}


class Arctan(Profile):
    """v0^i = sign * (delta alpha^i + arctan alpha^i), component by component."""

    name = "arctan"

    def __init__(self, delta=0.0, sign=1.0):
        self.delta = float(delta)
        self.sign = float(np.sign(sign)) or 1.0

    def __call__(self, pts):
        m, n = pts.shape
        s, d = self.sign, self.delta
        v = s * (d * pts + np.arctan(pts))
        J = np.zeros((m, n, n))
        H = np.zeros((m, n, n, n))
        idx = np.arange(n)
        J[:, idx, idx] = s * (d + 1.0 / (1.0 + pts ** 2))
        H[:, idx, idx, idx] = s * (-2.0 * pts / (1.0 + pts ** 2) ** 2)
        return v, J, H

    def bound(self, n):
        if self.delta != 0:
            return math.inf
        return math.sqrt(n) * math.pi / 2 + 1.0 + _ARCTAN_D2_SUP

    def params(self):
        return {"delta": self.delta, "sign": self.sign}


class Gaussian(Profile):
    """v0 = amplitude * direction * exp(-|alpha - center|^2 / (2 width^2))."""

    name = "gaussian"

    def __init__(self, amplitude=1.0, width=1.0, direction=None, center=None):
        self.amplitude = float(amplitude)
        self.width = float(width)
        if self.width <= 0:
            raise ConfigurationError("gaussian width must be positive")
        self.direction = None if direction is None else np.asarray(direction, dtype=float)
        self.center = None if center is None else np.asarray(center, dtype=float)

    def _dir(self, n):
        return np.ones(n) if self.direction is None else self.direction.reshape(n)

    def __call__(self, pts):
        m, n = pts.shape
        w2 = self.width ** 2
        y = pts - (0.0 if self.center is None else self.center.reshape(n))
        e = self.amplitude * np.exp(-0.5 * np.sum(y * y, axis=1) / w2)
        d = self._dir(n)
        de = -y / w2 * e[:, None]
        d2e = (y[:, :, None] * y[:, None, :] / w2 ** 2 - np.eye(n) / w2) * e[:, None, None]
        v = e[:, None] * d
        J = d[None, :, None] * de[:, None, :]
        H = d[None, :, None, None] * d2e[:, None, :, :]
        return v, J, H

    def bound(self, n):
        d = self._dir(n)
        A = abs(self.amplitude)
        dmax = float(np.max(np.abs(d)))
        return A * float(np.linalg.norm(d)) + A * dmax * math.exp(-0.5) / self.width \
            + A * dmax / self.width ** 2

    def params(self):
        out = {"amplitude": self.amplitude, "width": self.width}
        if self.direction is not None:
            out["direction"] = self.direction.tolist()
        if self.center is not None:
            out["center"] = self.center.tolist()
        return out


class Sine(Profile):
    """v0^i = amplitude * sin(wavenumber * alpha^i)."""

    name = "sine"

    def __init__(self, amplitude=1.0, wavenumber=1.0):
        self.amplitude = float(amplitude)
        self.wavenumber = float(wavenumber)

    def __call__(self, pts):
        m, n = pts.shape
        A, k = self.amplitude, self.wavenumber
        v = A * np.sin(k * pts)
        J = np.zeros((m, n, n))
        H = np.zeros((m, n, n, n))
        idx = np.arange(n)
        J[:, idx, idx] = A * k * np.cos(k * pts)
        H[:, idx, idx, idx] = -A * k * k * np.sin(k * pts)
        return v, J, H

    def bound(self, n):
        A, k = abs(self.amplitude), abs(self.wavenumber)
        return A * math.sqrt(n) + A * k + A * k * k

    def params(self):
        return {"amplitude": self.amplitude, "wavenumber": self.wavenumber}


class CustomProfile(Profile):
    """User profile from vectorised callables v(pts), dv(pts), d2v(pts)."""

    name = "custom"

    def __init__(self, v, dv, d2v, bound=None):
        if not (callable(v) and callable(dv) and callable(d2v)):
            raise ConfigurationError("custom profile needs v, dv and d2v callables")
        self._v, self._dv, self._d2v = v, dv, d2v
        self._bound = bound

    def __call__(self, pts):
        m, n = pts.shape
        return (np.asarray(self._v(pts), dtype=float).reshape(m, n),
                np.asarray(self._dv(pts), dtype=float).reshape(m, n, n),
                np.asarray(self._d2v(pts), dtype=float).reshape(m, n, n, n))

    def bound(self, n):
        return self._bound


# density profiles

class DensityProfile:
    name = "density"

    def __call__(self, pts):
        """Return (rho0, grad rho0) with shapes (m,) and (m, n)."""
        raise NotImplementedError

    def bound(self, n):
        return None

    def params(self):
        return {}


class ConstantDensity(DensityProfile):
    name = "const"

    def __init__(self, value=1.0):
        self.value = float(value)
        if self.value < 0:
            raise ConfigurationError("density must be non-negative")

    def __call__(self, pts):
        m, n = pts.shape
        return np.full(m, self.value), np.zeros((m, n))

    def bound(self, n):
        return self.value

    def params(self):
        return {"value": self.value}


class GaussianDensity(DensityProfile):
    name = "gaussian"

    def __init__(self, amplitude=1.0, width=1.0, floor=0.0):
        self.amplitude = float(amplitude)
        self.width = float(width)
        self.floor = float(floor)
        if self.amplitude < 0 or self.floor < 0 or self.width <= 0:
            raise ConfigurationError("gaussian density needs amplitude, floor >= 0 and width > 0")

    def __call__(self, pts):
        w2 = self.width ** 2
        e = self.amplitude * np.exp(-0.5 * np.sum(pts * pts, axis=1) / w2)
        return self.floor + e, -pts / w2 * e[:, None]

    def bound(self, n):
        return self.floor + self.amplitude + self.amplitude * math.exp(-0.5) / self.width

    def params(self):
        return {"amplitude": self.amplitude, "width": self.width, "floor": self.floor}


class CustomDensity(DensityProfile):
    name = "custom"

    def __init__(self, rho, drho, bound=None):
        self._rho, self._drho, self._bound = rho, drho, bound

    def __call__(self, pts):
        m, n = pts.shape
        return (np.asarray(self._rho(pts), dtype=float).reshape(m),
                np.asarray(self._drho(pts), dtype=float).reshape(m, n))

    def bound(self, n):
        return self._bound


_VELOCITY = {"zero": Zero, "linear": Linear, "arctan": Arctan, "gaussian": Gaussian, "sine": Sine}
_DENSITY = {"const": ConstantDensity, "constant": ConstantDensity, "gaussian": GaussianDensity}


def velocity_profile(kind, **params):
    """Look up a library profile by name (``"-arctan"`` flips the sign)."""
    if isinstance(kind, Profile):
        return kind
    name = str(kind)
    if name.startswith("-"):
        name = name[1:]
        params = dict(params)
        if name == "arctan":
            params["sign"] = -float(params.get("sign", 1.0))
        elif name in ("gaussian", "sine"):
            params["amplitude"] = -float(params.get("amplitude", 1.0))
        elif name == "linear":
            params["slope"] = -float(params.get("slope", 1.0))
    if name not in _VELOCITY:
        raise ConfigurationError(f"unknown velocity profile {kind!r}")
    try:
        return _VELOCITY[name](**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for profile {kind!r}: {exc}") from None


def density_profile(kind, **params):
    if isinstance(kind, DensityProfile):
        return kind
    if kind not in _DENSITY:
        raise ConfigurationError(f"unknown density profile {kind!r}")
    try:
        return _DENSITY[kind](**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for density {kind!r}: {exc}") from None


@dataclass(frozen=True)
class Transforms:
    """Batch of transformed data at m labels (see module docstring)."""

    v: np.ndarray       # (m, n)
    J: np.ndarray       # (m, n, n)
    H: np.ndarray       # (m, n, n, n)
    W: np.ndarray       # (m,)
    S: np.ndarray       # (m,)
    g0: np.ndarray      # (m, n)
    q: np.ndarray       # (m,)
    dW: np.ndarray      # (m, n)
    dg0: np.ndarray     # (m, n, n)   [i, l]
    dq: np.ndarray      # (m, n)
    d2g0: np.ndarray    # (m, n, n, n) [i, l, s]
    d2q: np.ndarray     # (m, n, n)

    @property
    def f0(self):
        return np.sqrt(self.q)

    def df0(self):
        f = self.f0
        safe = np.where(f > 0, f, 1.0)
        return np.where((f > 0)[:, None], self.dq / (2.0 * safe[:, None]), 0.0)

    def d2f0(self):
        f = self.f0
        safe = np.where(f > 0, f, 1.0)[:, None, None]
        out = self.d2q / (2.0 * safe) - self.dq[:, :, None] * self.dq[:, None, :] / (4.0 * safe ** 3)
        return np.where((f > 0)[:, None, None], out, 0.0)


class InitialData:
    """Cauchy data with amplitude ``epsilon`` and light speed ``c``.

    ``N0`` is the declared C2 bound of v0; if omitted the profile's analytic
    bound is used when known, otherwise a sampled estimate (flagged by
    ``N0_estimated``).
    """

    def __init__(self, n, v0, rho0=None, epsilon=0.1, c=1.0, N0=None, Q0=None,
                 sample_box=(-5.0, 5.0), sample_points=201):
        if n not in (1, 2, 3):
            raise ConfigurationError("dimension n must be 1, 2 or 3")
        c = float(c)
        epsilon = float(epsilon)
        if not (math.isfinite(c) and c > 0):
            raise ConfigurationError("light speed c must be positive")
        if not (math.isfinite(epsilon) and epsilon > 0):
            raise ConfigurationError("epsilon must be positive")
        self.n = n
        self.c = c
        self.epsilon = epsilon
        self.v0 = velocity_profile(v0) if not isinstance(v0, Profile) else v0
        self.rho0 = ConstantDensity(1.0) if rho0 is None else (
            rho0 if isinstance(rho0, DensityProfile) else density_profile(rho0))
        self.sample_box = tuple(sample_box)
        self.sample_points = int(sample_points)
        self.N0_estimated = False
        if N0 is None:
            N0 = self.v0.bound(n)
            if N0 is None:
                N0 = self.estimate_sup_norms()[0]
                self.N0_estimated = True
        self.N0 = float(N0)
        self.M0 = n * math.sqrt(n) * self.N0
        if Q0 is None:
            rb = self.rho0.bound(n)
            if rb is None:
                rb = self.estimate_sup_norms()[2] - self.N0
            Q0 = rb + self.N0
        self.Q0 = float(Q0)

    @classmethod
    def from_config(cls, cfg):
        if not isinstance(cfg, dict):
            raise ConfigurationError("initial_data must be a table")
        known = {"n", "c", "epsilon", "v0", "rho0", "N0", "Q0", "delta", "sign",
                 "amplitude", "width", "wavenumber", "slope", "rho0_params", "v0_params"}
        extra = set(cfg) - known
        if extra:
            raise ConfigurationError(f"unknown initial_data keys: {sorted(extra)}")
        vp = dict(cfg.get("v0_params", {}))
        name = cfg.get("v0", "zero")
        base = str(name).lstrip("-")
        for key in ("delta", "sign", "amplitude", "width", "wavenumber", "slope"):
            if key in cfg:
                vp[key] = cfg[key]
        allowed = {"arctan": {"delta", "sign"}, "gaussian": {"amplitude", "width", "direction", "center"},
                   "sine": {"amplitude", "wavenumber"}, "linear": {"slope"}, "zero": set()}
        if base in allowed:
            vp = {k: v for k, v in vp.items() if k in allowed[base]}
        rho = cfg.get("rho0", "const")
        return cls(n=int(cfg.get("n", 1)), c=cfg.get("c", 1.0), epsilon=cfg.get("epsilon", 0.1),
                   v0=velocity_profile(name, **vp),
                   rho0=density_profile(rho, **dict(cfg.get("rho0_params", {}))),
                   N0=cfg.get("N0"), Q0=cfg.get("Q0"))

    def with_epsilon(self, epsilon):
        """Copy with a different amplitude (bounds are kept)."""
        new = object.__new__(InitialData)
        new.__dict__.update(self.__dict__)
        epsilon = float(epsilon)
        if not epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        new.epsilon = epsilon
        return new

    @property
    def eps_max(self):
        """Default amplitude ceiling 0.9 c / M0 (infinite for zero data)."""
        return math.inf if self.M0 == 0 else 0.9 * self.c / self.M0

    @property
    def is_zero(self):
        return isinstance(self.v0, Zero) or self.N0 == 0.0

    # raw data

    def profile(self, alpha):
        pts, _ = as_points(alpha, self.n)
        return self.v0(pts)

    def density0(self, alpha):
        pts, single = as_points(alpha, self.n)
        rho, grad = self.rho0(pts)
        if np.any(rho < 0):
            raise DomainError("initial density is negative")
        return (float(rho[0]), grad[0]) if single else (rho, grad)

    # transforms

    def transforms(self, pts):
        """All transforms for an (m, n) label array."""
        eps, c = self.epsilon, self.c
        v, J, H = self.v0(pts)
        W = np.sum(v * v, axis=1)
        S = c * c - eps * eps * W
        if np.any(S <= 0):
            bad = int(np.argmin(S))
            raise SuperluminalDataError(
                f"eps|v0| >= c at alpha={pts[bad].tolist()} (eps|v0|={eps * math.sqrt(W[bad]):.6g})")
        psi = S ** -0.5
        psi1 = 0.5 * eps * eps * S ** -1.5
        psi2 = 0.75 * eps ** 4 * S ** -2.5
        dW = 2.0 * np.einsum("mi,mil->ml", v, J)
        d2W = 2.0 * (np.einsum("mis,mil->mls", J, J) + np.einsum("mi,mils->mls", v, H))
        g0 = eps * v * psi[:, None]
        dg0 = eps * (J * psi[:, None, None] + v[:, :, None] * psi1[:, None, None] * dW[:, None, :])
        d2g0 = eps * (
            H * psi[:, None, None, None]
            + psi1[:, None, None, None] * (J[:, :, :, None] * dW[:, None, None, :]
                                           + J[:, :, None, :] * dW[:, None, :, None]
                                           + v[:, :, None, None] * d2W[:, None, :, :])
            + (v[:, :, None, None] * psi2[:, None, None, None]
               * dW[:, None, :, None] * dW[:, None, None, :]))
        q = eps * eps * W / S
        q1 = eps * eps * c * c / S ** 2
        q2 = 2.0 * eps ** 4 * c * c / S ** 3
        dq = q1[:, None] * dW
        d2q = q2[:, None, None] * dW[:, :, None] * dW[:, None, :] + q1[:, None, None] * d2W
        return Transforms(v=v, J=J, H=H, W=W, S=S, g0=g0, q=q, dW=dW, dg0=dg0, dq=dq,
                          d2g0=d2g0, d2q=d2q)

    def eval_f0(self, alpha):
        pts, single = as_points(alpha, self.n)
        f = self.transforms(pts).f0
        return float(f[0]) if single else f

    def eval_g0(self, alpha):
        pts, single = as_points(alpha, self.n)
        g = self.transforms(pts).g0
        return g[0] if single else g

    def deriv_f0(self, alpha, order=1):
        pts, single = as_points(alpha, self.n)
        tr = self.transforms(pts)
        if order == 1:
            out = tr.df0()
        elif order == 2:
            out = tr.d2f0()
        else:
            raise DomainError("order must be 1 or 2")
        return out[0] if single else out

    def deriv_g0(self, alpha, order=1):
        pts, single = as_points(alpha, self.n)
        tr = self.transforms(pts)
        if order == 1:
            out = tr.dg0
        elif order == 2:
            out = tr.d2g0
        else:
            raise DomainError("order must be 1 or 2")
        return out[0] if single else out

    # bounds

    def sup_norms(self):
        """Declared (N0, M0, Q0)."""
        return self.N0, self.M0, self.Q0

    def estimate_sup_norms(self, box=None, points=None):
        """Sampled (N0, M0, Q0) on a tensor grid; not a rigorous bound."""
        lo, hi = self.sample_box if box is None else box
        m = self.sample_points if points is None else int(points)
        if self.n == 3:
            m = min(m, 41)
        elif self.n == 2:
            m = min(m, 101)
        axis = np.linspace(lo, hi, m)
        grids = np.meshgrid(*([axis] * self.n), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        v, J, H = self.v0(pts)
        N0 = float(np.max(np.linalg.norm(v, axis=1)) + np.max(np.abs(J)) + np.max(np.abs(H)))
        rho, grad = self.rho0(pts)
        Q0 = float(np.max(np.abs(rho)) + np.max(np.abs(grad))) + N0
        return N0, self.n * math.sqrt(self.n) * N0, Q0
