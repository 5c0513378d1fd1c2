"""Scale factors a(t) of a spatially flat expanding background.

Every factor is normalised to a(0) = 1.  Three kinds are supported: the
power law (1+t)^l, the exponential e^{Ht}, and a user-supplied evaluator
pair (a, da/dt).  Classification follows the four expansion regimes:

* ``H1``: accelerating or linear expansion (da/dt > 0, d2a/dt2 >= 0);
* ``H2``: decelerating but fast, a(t) >= (1+t)^((1+delta0)/2);
* ``H3``: slow power law (1+t)^l with 0 < l <= 1/2;
* ``H4``: static, a = 1.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ConfigurationError, DomainError
from .quadrature import cumulative

REGIMES = ("H1", "H2", "H3", "H4")

# Sample grid used to classify user-supplied factors.
CLASSIFY_GRID = np.concatenate([[0.0], np.geomspace(1e-3, 1e6, 24)])


@dataclass(frozen=True)
class Regime:
    """Outcome of :meth:`ScaleFactor.classify`.

    ``name`` is ``None`` when a sampled classification is inconclusive.
    """

    name: object
    delta0: object = None
    l: object = None
    sampled: bool = False
    inconclusive: bool = False

    def __str__(self):
        tag = self.name if self.name is not None else "unclassified"
        if self.sampled:
            tag += " (sampled, inconclusive)" if self.inconclusive else " (sampled)"
        return tag


def _times(t):
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError("time must be finite and non-negative")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


class ScaleFactor:
    """Immutable scale factor; build one with :meth:`power`, :meth:`exponential` or :meth:`custom`."""

    __slots__ = ("kind", "l", "H", "_a", "_da", "delta0", "_regime")

    def __init__(self, kind, l=None, H=None, a=None, da=None, delta0=None):
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "_a", a)
        object.__setattr__(self, "_da", da)
        object.__setattr__(self, "delta0", delta0)
        object.__setattr__(self, "_regime", None)

    def __setattr__(self, name, value):
        raise AttributeError("ScaleFactor is immutable")

    def __reduce__(self):
        return (ScaleFactor, (self.kind, self.l, self.H, self._a, self._da, self.delta0))

    def __repr__(self):
        if self.kind == "power":
            return f"ScaleFactor.power(l={self.l!r})"
        if self.kind == "exp":
            return f"ScaleFactor.exponential(H={self.H!r})"
        return f"ScaleFactor.custom({self._a!r})"

    # construction

    @classmethod
    def power(cls, l):
        l = float(l)
        if not math.isfinite(l) or l < 0:
            raise ConfigurationError("power-law exponent must be finite and >= 0")
        return cls("power", l=l)

    @classmethod
    def exponential(cls, H):
        H = float(H)
        if not math.isfinite(H) or H <= 0:
            raise ConfigurationError("exponential rate must be finite and > 0")
        return cls("exp", H=H)

    @classmethod
    def custom(cls, a, da=None, delta0=None):
        """Wrap vectorised callables ``a(t)`` and ``da(t)``.

        ``delta0`` is optional metadata used when the factor looks like H2.
        """
        if not callable(a):
            raise ConfigurationError("custom scale factor needs a callable a(t)")
        a0 = float(np.asarray(a(np.array([0.0])), dtype=float)[0])
        if not abs(a0 - 1.0) <= 1e-12:
            raise ConfigurationError(f"custom scale factor must satisfy a(0)=1, got {a0!r}")
        return cls("custom", a=a, da=da, delta0=delta0)

    @classmethod
    def from_config(cls, cfg):
        """Build from a mapping such as ``{"kind": "power", "l": 0.5}``."""
        if not isinstance(cfg, dict) or "kind" not in cfg:
            raise ConfigurationError("scale_factor needs a 'kind' key")
        kind = cfg["kind"]
        if kind == "power":
            if "l" not in cfg:
                raise ConfigurationError("power scale factor needs 'l'")
            return cls.power(cfg["l"])
        if kind in ("exp", "exponential"):
            if "H" not in cfg:
                raise ConfigurationError("exponential scale factor needs 'H'")
            return cls.exponential(cfg["H"])
        if kind in ("static", "const"):
            return cls.power(0.0)
        raise ConfigurationError(f"unknown scale factor kind {kind!r}")

    def to_config(self):
        if self.kind == "power":
            return {"kind": "power", "l": self.l}
        if self.kind == "exp":
            return {"kind": "exp", "H": self.H}
        return {"kind": "custom"}

    # evaluation

    def eval_a(self, t):
        ta = _times(t)
        if self.kind == "power":
            r = np.power(1.0 + ta, self.l)
        elif self.kind == "exp":
            r = np.exp(self.H * ta)
        else:
            r = np.asarray(self._a(np.atleast_1d(ta)), dtype=float).reshape(ta.shape)
        return _out(r, t)

    def eval_da(self, t):
        ta = _times(t)
        if self.kind == "power":
            r = self.l * np.power(1.0 + ta, self.l - 1.0)
        elif self.kind == "exp":
            r = self.H * np.exp(self.H * ta)
        else:
            if self._da is None:
                raise ConfigurationError("custom scale factor has no derivative evaluator")
            r = np.asarray(self._da(np.atleast_1d(ta)), dtype=float).reshape(ta.shape)
        return _out(r, t)

    def eval_dda(self, t):
        """Second derivative; a central difference of da/dt for custom factors."""
        ta = _times(t)
        if self.kind == "power":
            r = self.l * (self.l - 1.0) * np.power(1.0 + ta, self.l - 2.0)
        elif self.kind == "exp":
            r = self.H ** 2 * np.exp(self.H * ta)
        else:
            h = np.maximum(1e-6, 1e-6 * ta)
            lo = np.maximum(ta - h, 0.0)
            hi = ta + h
            r = (np.asarray(self.eval_da(hi)) - np.asarray(self.eval_da(lo))) / (hi - lo)
        return _out(r, t)

    def hubble(self, t):
        """Expansion rate (da/dt)/a."""
        ta = _times(t)
        if self.kind == "power":
            r = self.l / (1.0 + ta)
        elif self.kind == "exp":
            r = np.full_like(ta, self.H)
        else:
            r = np.asarray(self.eval_da(ta)) / np.asarray(self.eval_a(ta))
        return _out(r, t)

    def log_scale(self, t):
        """ln a(t)."""
        ta = _times(t)
        if self.kind == "power":
            r = self.l * np.log1p(ta)
        elif self.kind == "exp":
            r = self.H * ta
        else:
            r = np.log(np.asarray(self.eval_a(ta)))
        return _out(r, t)

    def inv_power(self, k, t):
        """a(t)^(-k), computed through ln a so it never overflows."""
        return _out(np.exp(-k * np.asarray(self.log_scale(t))), t)

    # regime

    def classify(self):
        if self._regime is None:
            object.__setattr__(self, "_regime", self._classify())
        return self._regime

    def _classify(self):
        if self.kind == "power":
            l = self.l
            if l == 0.0:
                return Regime("H4", l=0.0)
            if l <= 0.5:
                return Regime("H3", l=l)
            if l < 1.0:
                return Regime("H2", delta0=2.0 * l - 1.0, l=l)
            return Regime("H1", l=l)
        if self.kind == "exp":
            return Regime("H1")
        return self._classify_sampled()

    def _classify_sampled(self):
        t = CLASSIFY_GRID
        with np.errstate(over="ignore", invalid="ignore"):
            a = np.asarray(self.eval_a(t), dtype=float)
        if abs(a[0] - 1.0) > 1e-12:
            raise ConfigurationError("custom scale factor must satisfy a(0)=1")
        # drop samples where a user factor overflows
        keep = np.isfinite(a)
        if self._da is not None:
            with np.errstate(over="ignore", invalid="ignore"):
                keep &= np.isfinite(np.asarray(self.eval_da(t), dtype=float))
                keep &= np.isfinite(np.asarray(self.eval_dda(t), dtype=float))
        t, a = t[keep], a[keep]
        if np.any(a <= 0):
            return Regime(None, sampled=True, inconclusive=True)
        if np.allclose(a, 1.0, rtol=0, atol=1e-12):
            return Regime("H4", l=0.0, sampled=True)
        # exact power law check
        l = math.log(a[t == 1.0][0]) / math.log(2.0) if np.any(t == 1.0) else \
            float(np.log(a[-1]) / np.log1p(t[-1]))
        if 0 < l <= 0.5 and np.allclose(a, np.power(1.0 + t, l), rtol=1e-10, atol=0):
            return Regime("H3", l=l, sampled=True)
        if self._da is None:
            return Regime(None, sampled=True, inconclusive=True)
        da = np.asarray(self.eval_da(t), dtype=float)
        dda = np.asarray(self.eval_dda(t), dtype=float)
        if not np.all(da > 0):
            return Regime(None, sampled=True, inconclusive=True)
        if np.all(dda >= 0):
            return Regime("H1", sampled=True)
        if np.all(dda < 0):
            d0 = self.delta0
            if d0 is None:
                return Regime(None, sampled=True, inconclusive=True)
            if 0 < d0 < 1 and np.all(a >= np.power(1.0 + t, 0.5 * (1.0 + d0)) * (1 - 1e-12)):
                return Regime("H2", delta0=float(d0), sampled=True)
        return Regime(None, sampled=True, inconclusive=True)

    # integrals

    def integral_inv_power(self, k, t, rtol=1e-10):
        """Integral of a(s)^(-k) over [0, t]."""
        k = float(k)
        if not k > 0:
            raise DomainError("k must be positive")
        ta = _times(t)
        if self.kind == "power":
            e = k * self.l
            if abs(1.0 - e) < 1e-14:
                r = np.log1p(ta)
            else:
                r = np.expm1((1.0 - e) * np.log1p(ta)) / (1.0 - e)
        elif self.kind == "exp":
            r = -np.expm1(-k * self.H * ta) / (k * self.H)
        else:
            flat = np.atleast_1d(ta).ravel()
            order = np.argsort(flat)
            tau = np.concatenate([[0.0], np.log1p(flat[order])])

            def integrand(x):
                s = np.expm1(x)
                return np.asarray(self.eval_a(s)) ** (-k) * np.exp(x)

            vals = cumulative(integrand, tau, rtol=rtol, atol=1e-14)[1:]
            r = np.empty_like(flat)
            r[order] = vals
            r = r.reshape(ta.shape)
        return _out(r, t)

    def integral_inv_power_quad(self, k, t, rtol=1e-10):
        """Same integral, always by adaptive quadrature (cross-check route)."""
        ta = float(_times(t))

        def integrand(x):
            s = np.expm1(x)
            return np.asarray(self.inv_power(k, s)) * np.exp(x)

        return float(cumulative(integrand, np.array([0.0, math.log1p(ta)]), rtol=rtol)[-1])
