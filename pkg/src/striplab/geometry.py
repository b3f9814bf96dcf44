"""Warped-product metric models near a codimension-1 flat torus.

A model is the strip |x| <= X with metric dx^2 + G(s, x)^2 * (flat metric on
the torus factor).  Every profile below satisfies G(s, 0) = 1 and
G_x(s, 0) = 0, so the torus x = 0 is totally geodesic and flat, and
G_xx >= 0, so the normal curvature K_perp = -G_xx / G is nonpositive.

All derivatives are analytic (no finite differencing anywhere).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OrderMismatch, OutOfStrip, Unsupported

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# profiles


class Profile:
    """Warp factor G(s, x) with first and second x-derivatives."""

    kind = "abstract"
    s_dependent = False

    def warp(self, s, x):
        """Return (G, G_x, G_xx) at (s, x); accepts scalars or arrays."""
        raise NotImplementedError

    def warp_scalar(self, s, x):
        """Scalar fast path for (G, G_x, G_xx); used inside ODE right-hand sides."""
        g, gx, gxx = self.warp(s, x)
        return float(g), float(gx), float(gxx)

    def warp_excess(self, s, x):
        """Return G(s, x) - 1 without cancellation (exact for tiny x)."""
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError


@dataclass(frozen=True)
class FlatProfile(Profile):
    """G identically 1: the flat cylinder (integrator oracle only)."""

    kind = "flat"

    def warp(self, s, x):
        z = np.zeros_like(np.asarray(x, dtype=float))
        return 1.0 + z, z, z

    def warp_scalar(self, s, x):
        return 1.0, 0.0, 0.0

    def warp_excess(self, s, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def describe(self):
        return {"kind": "flat"}


@dataclass(frozen=True)
class PowerProfile(Profile):
    """G = 1 + c |x|^(m+2); normal curvature vanishes to order m - 1."""

    m: int
    c: float

    kind = "power"

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("power profile requires m >= 1")
        if self.c <= 0:
            raise ValueError("power profile requires c > 0")

    def warp(self, s, x):
        x = np.asarray(x, dtype=float)
        m, c = self.m, self.c
        ax = np.abs(x)
        axm = ax**m
        g = 1.0 + c * axm * ax * ax
        gx = c * (m + 2) * x * axm
        gxx = c * (m + 2) * (m + 1) * axm
        return g, gx, gxx

    def warp_scalar(self, s, x):
        m, c = self.m, self.c
        ax = abs(x)
        axm = ax**m
        return (
            1.0 + c * axm * ax * ax,
            c * (m + 2) * x * axm,
            c * (m + 2) * (m + 1) * axm,
        )

    def warp_excess(self, s, x):
        x = np.asarray(x, dtype=float)
        return self.c * np.abs(x) ** (self.m + 2)

    def describe(self):
        return {"kind": "power", "m": self.m, "c": self.c}


@dataclass(frozen=True)
class CappedPowerProfile(Profile):
    """Power profile glued C^2 at |x| = x_cap onto a * cosh(b (|x| - x0)).

    The cap keeps K_perp strictly negative for |x| > x_cap with closed-form
    derivatives.  The gluing parameters are solved from matching G, G_x, G_xx
    at the junction; that requires c * x_cap^(m+2) < m + 1.
    """

    m: int
    c: float
    x_cap: float
    a: float = field(init=False)
    b: float = field(init=False)
    x0: float = field(init=False)

    kind = "capped_power"

    def __post_init__(self):
        if self.m < 1 or self.c <= 0 or self.x_cap <= 0:
            raise ValueError("capped power profile requires m >= 1, c > 0, x_cap > 0")
        m, c, xc = self.m, self.c, self.x_cap
        gp = 1.0 + c * xc ** (m + 2)
        gp1 = c * (m + 2) * xc ** (m + 1)
        gp2 = c * (m + 2) * (m + 1) * xc**m
        b = math.sqrt(gp2 / gp)
        arg = gp1 / (b * gp)
        if arg >= 1.0:
            raise ValueError("cap junction unsolvable: need c * x_cap**(m+2) < m + 1")
        u = math.atanh(arg) / b
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "x0", xc - u)
        object.__setattr__(self, "a", gp / math.cosh(b * u))

    def warp(self, s, x):
        x = np.asarray(x, dtype=float)
        m, c = self.m, self.c
        ax = np.abs(x)
        inner = ax <= self.x_cap
        axm = ax**m
        g_in = 1.0 + c * axm * ax * ax
        gx_in = c * (m + 2) * x * axm
        gxx_in = c * (m + 2) * (m + 1) * axm
        z = self.b * (ax - self.x0)
        g_out = self.a * np.cosh(z)
        gx_out = np.sign(x) * self.a * self.b * np.sinh(z)
        gxx_out = self.a * self.b * self.b * np.cosh(z)
        return (
            np.where(inner, g_in, g_out),
            np.where(inner, gx_in, gx_out),
            np.where(inner, gxx_in, gxx_out),
        )

    def warp_scalar(self, s, x):
        ax = abs(x)
        if ax <= self.x_cap:
            m, c = self.m, self.c
            axm = ax**m
            return (
                1.0 + c * axm * ax * ax,
                c * (m + 2) * x * axm,
                c * (m + 2) * (m + 1) * axm,
            )
        z = self.b * (ax - self.x0)
        ch, sh = math.cosh(z), math.sinh(z)
        sign = 1.0 if x >= 0 else -1.0
        return self.a * ch, sign * self.a * self.b * sh, self.a * self.b * self.b * ch

    def warp_excess(self, s, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        inner = ax <= self.x_cap
        out = self.a * np.cosh(self.b * (ax - self.x0)) - 1.0
        return np.where(inner, self.c * ax ** (self.m + 2), out)

    def describe(self):
        return {"kind": "capped_power", "m": self.m, "c": self.c, "x_cap": self.x_cap}


def _smooth_step(u):
    """C-infinity transition 0 -> 1 on [0, 1] built from exp(-1/u)."""
    u = np.asarray(u, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        lo = np.where(u > 0.0, np.exp(-1.0 / np.where(u > 0.0, u, 1.0)), 0.0)
        v = 1.0 - u
        hi = np.where(v > 0.0, np.exp(-1.0 / np.where(v > 0.0, v, 1.0)), 0.0)
    out = np.where(u <= 0.0, 0.0, np.where(u >= 1.0, 1.0, lo / (lo + hi)))
    return out


@dataclass(frozen=True)
class SDependentProfile(Profile):
    """Surface profile G = 1 + c(s) |x|^(m+2) with a periodic plateau weight.

    c(s) equals the peak value c exactly on the window [0, gamma1], decays
    smoothly to zero within a margin on each side, and vanishes on the rest
    of the period gamma0.  Realizes the nonuniform curvature setting: K <= 0
    everywhere, with the two-sided order-m bound only over the window.
    """

    m: int
    c: float
    gamma0: float
    gamma1: float
    c_min: float

    kind = "s_dependent"
    s_dependent = True

    def __post_init__(self):
        if self.m < 1 or self.c <= 0:
            raise ValueError("s-dependent profile requires m >= 1, c > 0")
        if not (0.0 < self.gamma1 < self.gamma0):
            raise ValueError("requires 0 < gamma1 < gamma0")
        if not (0.0 < self.c_min <= self.c):
            raise ValueError("requires 0 < c_min <= c (plateau value is c)")

    @property
    def margin(self):
        return min(self.gamma1, self.gamma0 - self.gamma1) / 4.0

    def modulation(self, s):
        """Periodic weight c(s): equal to c on [0, gamma1], zero far outside."""
        w = self.margin
        sm = np.mod(np.asarray(s, dtype=float) + w, self.gamma0) - w
        return self.c * _smooth_step((sm + w) / w) * _smooth_step((self.gamma1 + w - sm) / w)

    def warp(self, s, x):
        x = np.asarray(x, dtype=float)
        cs = self.modulation(s)
        m = self.m
        ax = np.abs(x)
        axm = ax**m
        g = 1.0 + cs * axm * ax * ax
        gx = cs * (m + 2) * x * axm
        gxx = cs * (m + 2) * (m + 1) * axm
        return g, gx, gxx

    def modulation_scalar(self, s):
        w = self.margin
        sm = math.fmod(s + w, self.gamma0)
        if sm < 0.0:
            sm += self.gamma0
        sm -= w
        if sm <= -w or sm >= self.gamma1 + w:
            return 0.0
        if 0.0 <= sm <= self.gamma1:
            return self.c
        u = (sm + w) / w if sm < 0.0 else (self.gamma1 + w - sm) / w
        lo = math.exp(-1.0 / u)
        hi = math.exp(-1.0 / (1.0 - u)) if u < 1.0 else 0.0
        return self.c * lo / (lo + hi)

    def warp_scalar(self, s, x):
        cs = self.modulation_scalar(s)
        m = self.m
        ax = abs(x)
        axm = ax**m
        return (
            1.0 + cs * axm * ax * ax,
            cs * (m + 2) * x * axm,
            cs * (m + 2) * (m + 1) * axm,
        )

    def warp_excess(self, s, x):
        return self.modulation(s) * np.abs(np.asarray(x, dtype=float)) ** (self.m + 2)

    def describe(self):
        return {
            "kind": "s_dependent",
            "m": self.m,
            "c": self.c,
            "gamma0": self.gamma0,
            "gamma1": self.gamma1,
            "c_min": self.c_min,
        }


@dataclass(frozen=True)
class ConstantCurvatureProfile(Profile):
    """G = cosh(k x): constant curvature -k^2 (Riccati fixed-point oracle)."""

    k: float

    kind = "constant_curvature"

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("constant curvature profile requires k > 0")

    def warp(self, s, x):
        x = np.asarray(x, dtype=float)
        kx = self.k * x
        g = np.cosh(kx)
        return g, self.k * np.sinh(kx), self.k * self.k * g

    def warp_scalar(self, s, x):
        kx = self.k * x
        g = math.cosh(kx)
        return g, self.k * math.sinh(kx), self.k * self.k * g

    def warp_excess(self, s, x):
        x = np.asarray(x, dtype=float)
        sh = np.sinh(0.5 * self.k * x)
        return 2.0 * sh * sh

    def describe(self):
        return {"kind": "constant_curvature", "k": self.k}


# ---------------------------------------------------------------------------
# metric model


@dataclass(frozen=True)
class MetricModel:
    """Strip model: dimension n, half-width X, torus circumference gamma0."""

    profile: Profile
    n: int = 2
    X: float = 0.5
    gamma0: float = TWO_PI

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("manifold dimension must be >= 2")
        if self.X <= 0 or self.gamma0 <= 0:
            raise ValueError("X and gamma0 must be positive")
        if self.profile.s_dependent and self.n != 2:
            raise ValueError("s-dependent profiles are surface models (n = 2)")

    @property
    def order(self):
        """Curvature-vanishing order m, when the profile has one."""
        return getattr(self.profile, "m", None)

    def check_in_strip(self, x):
        x = np.asarray(x, dtype=float)
        lim = self.X * (1.0 + 1e-12) + 1e-15
        if np.any(np.abs(x) > lim):
            raise OutOfStrip(f"|x| = {float(np.max(np.abs(x))):.6g} exceeds X = {self.X}")

    def describe(self):
        d = {"n": self.n, "X": self.X, "gamma0": self.gamma0}
        d.update({"profile": self.profile.describe()})
        return d


def flat_model(X=0.5, n=2, gamma0=TWO_PI):
    return MetricModel(FlatProfile(), n=n, X=X, gamma0=gamma0)


def power_model(m, c, X=0.5, n=2, gamma0=TWO_PI):
    return MetricModel(PowerProfile(m=m, c=c), n=n, X=X, gamma0=gamma0)


def capped_power_model(m, c, x_cap, X=1.0, n=2, gamma0=TWO_PI):
    return MetricModel(CappedPowerProfile(m=m, c=c, x_cap=x_cap), n=n, X=X, gamma0=gamma0)


def s_dependent_model(m, c, gamma0=TWO_PI, gamma1=None, c_min=None, X=0.5):
    gamma1 = gamma0 / 2.0 if gamma1 is None else gamma1
    c_min = c if c_min is None else c_min
    prof = SDependentProfile(m=m, c=c, gamma0=gamma0, gamma1=gamma1, c_min=c_min)
    return MetricModel(prof, n=2, X=X, gamma0=gamma0)


def constant_curvature_model(k, X=5.0, n=2, gamma0=TWO_PI):
    return MetricModel(ConstantCurvatureProfile(k=k), n=n, X=X, gamma0=gamma0)


# ---------------------------------------------------------------------------
# curvature operations


@dataclass(frozen=True)
class CurvatureSample:
    """Normal, sectional, and Ricci curvature at one (x, theta)."""

    K_perp: float
    K_sigma: float
    Ric: float


def eval_metric(model, s, x):
    """Warp factor and its first two x-derivatives at (s, x)."""
    model.check_in_strip(x)
    g, gx, gxx = model.profile.warp(s, x)
    return g, gx, gxx


def normal_curvature(model, s, x):
    """K_perp = -G_xx / G: curvature of the plane spanned by v and d/dx."""
    g, _, gxx = eval_metric(model, s, x)
    return -gxx / g


def sectional_and_ricci(model, x, theta):
    """Curvatures of a warped product at plane/vector angle theta to d/dx.

    K_sigma = K_perp cos^2(theta) - (G_x/G)^2 sin^2(theta) and
    Ric = K_perp + (n - 2) K_sigma; at theta = 0 this gives
    Ric = (n - 1) K_perp.  Only defined for s-independent profiles.
    """
    if model.profile.s_dependent:
        raise Unsupported("sectional/Ricci formulas require an s-independent warped product")
    g, gx, gxx = eval_metric(model, 0.0, x)
    k_perp = -gxx / g
    ct, st = np.cos(theta), np.sin(theta)
    k_sigma = k_perp * ct * ct - (gx / g) ** 2 * st * st
    ric = k_perp + (model.n - 2) * k_sigma
    return CurvatureSample(K_perp=float(k_perp), K_sigma=float(k_sigma), Ric=float(ric))


def ricci_theta0(model, x):
    """Ricci curvature of the vertical direction: (n - 1) * K_perp."""
    return (model.n - 1) * normal_curvature(model, 0.0, x)


def principal_curvatures(model, s, x):
    """Principal curvatures of the parallel hypersurface: all equal G_x / G."""
    g, gx, _ = eval_metric(model, s, x)
    return np.full(model.n - 1, float(gx / g))


# ---------------------------------------------------------------------------
# vanishing-order certificates

_SLOPE_LIMIT = 0.5  # |d log ratio / d log x| beyond this means the order is wrong


def order_envelope(xs, values, order):
    """Envelope constants for `values ~ |x|^order` on a positive grid.

    Returns (C1_hat, C2_hat) = (max, min) of values / x^order.  Raises
    OrderMismatch when the ratio degenerates to zero, diverges, or trends
    like a nonzero power of x (wrong order supplied).
    """
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(values, dtype=float)
    if xs.ndim != 1 or len(xs) < 16:
        raise ValueError("need a 1-d grid with at least 16 points")
    if np.any(xs <= 0):
        raise ValueError("grid must be strictly positive")
    ratios = values / xs**order
    c1 = float(np.max(ratios))
    c2 = float(np.min(ratios))
    if not np.isfinite(c1) or c2 <= 1e-12 * max(c1, 1e-300):
        raise OrderMismatch(f"ratio envelope degenerate: C1={c1:.3g}, C2={c2:.3g}")
    slope = np.polyfit(np.log(xs), np.log(ratios), 1)[0]
    if abs(slope) > _SLOPE_LIMIT:
        raise OrderMismatch(f"ratio trends like x^{slope:.2f}; supplied order {order} is off")
    return c1, c2


def _order_grid(x_range, grid):
    lo, hi = x_range
    if not (0.0 < lo < hi):
        raise ValueError("x_range must satisfy 0 < lo < hi")
    if grid < 16:
        raise ValueError("grid size must be >= 16")
    return np.geomspace(lo, hi, grid)


def verify_curvature_order(model, x_range, grid=64, order=None, s_values=None):
    """Certify -C1 |x|^m <= K_perp <= -C2 |x|^m on the grid.

    For s-dependent profiles the envelope is taken over an s-grid as well;
    pass `s_values` to restrict to a sub-window of the period (the curvature
    window L), otherwise the whole period is sampled.
    """
    m = model.order if order is None else order
    if m is None:
        raise Unsupported("profile has no curvature-vanishing order")
    xs = _order_grid(x_range, grid)
    if model.profile.s_dependent:
        if s_values is None:
            s_values = np.linspace(0.0, model.gamma0, 65)
        vals = np.array([-normal_curvature(model, s, xs) for s in np.atleast_1d(s_values)])
        worst = vals.min(axis=0)  # the sandwich must hold for every s
        best = vals.max(axis=0)
        c1, _ = order_envelope(xs, best, m)
        _, c2 = order_envelope(xs, worst, m)
        return c1, c2
    return order_envelope(xs, -normal_curvature(model, 0.0, xs), m)


def warp_excess_certificate(model, x_range, grid=64, order=None):
    """Certify C1 |x|^(m+2) <= G - 1 <= C2 |x|^(m+2) (Appendix equivalence)."""
    m = model.order if order is None else order
    if m is None:
        raise Unsupported("profile has no curvature-vanishing order")
    xs = _order_grid(x_range, grid)
    return order_envelope(xs, model.profile.warp_excess(0.0, xs), m + 2)


def ricci_order_certificate(model, x_range, grid=64, order=None):
    """Certify the theta = 0 Ricci envelope -Ric ~ |x|^m (Appendix equivalence)."""
    m = model.order if order is None else order
    if m is None:
        raise Unsupported("profile has no curvature-vanishing order")
    xs = _order_grid(x_range, grid)
    return order_envelope(xs, -np.asarray([ricci_theta0(model, x) for x in xs]), m)
