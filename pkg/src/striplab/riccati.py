"""Scalar Riccati machinery for unstable Jacobi data along host geodesics.

The central object is the nonnegative solution of u' = -u^2 - K(tau) along a
geodesic, obtained as the backward limit: seed a large value far in the past
and integrate forward; for K <= 0 the seed dependence is contracted away.
Its value at tau = 0 is the (scalar) unstable shape operator, the source of
the auxiliary potential psi_u = -u(0) and of the regularity proxy lambda.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    BlowUp,
    DegenerateSample,
    DomainTooWide,
    InvalidCase,
    NotConverged,
    SandwichViolated,
    Unsupported,
)
from .geodesics import PhaseState, integrate


@dataclass
class RiccatiCurve:
    """Solution samples of u' = -u^2 - K along a host curve."""

    grid: np.ndarray
    u: np.ndarray
    converged: bool
    T_back: float
    tol: float = 1e-8
    _dense: object = field(default=None, repr=False)
    _curvature: object = field(default=None, repr=False)

    @property
    def u0(self):
        """Value at the curve's final point (tau = 0 for backward limits)."""
        return float(self.u[-1])

    def residual(self, h=None, skip=2.0):
        """Max |u' + u^2 + K| from a 4th-order stencil on the dense output.

        The initial seed transient is excluded (`skip` time units, capped at
        a third of the domain), where the true solution has huge derivatives
        and any finite stencil is meaningless.
        """
        lo, hi = float(self.grid[0]), float(self.grid[-1])
        span = hi - lo
        if h is None:
            h = min(1e-2, span / 64.0)
        lo = lo + min(max(skip, 0.02 * span), span / 3.0)
        taus = np.linspace(lo + 2 * h, hi - 2 * h, 257)
        u = self._dense(taus)
        du = (
            -self._dense(taus + 2 * h)
            + 8.0 * self._dense(taus + h)
            - 8.0 * self._dense(taus - h)
            + self._dense(taus - 2 * h)
        ) / (12.0 * h)
        k = np.asarray([self._curvature(t) for t in taus])
        return float(np.max(np.abs(du + u * u + k)))


def comparison_domain_limit(C, m):
    """R0(C, m) = ((m+1)^2 / (2C))^(1/(m+2)), the two-sided-bound domain."""
    return ((m + 1.0) ** 2 / (2.0 * C)) ** (1.0 / (m + 2.0))


def solve_comparison_riccati(C, m, R, n_grid=200, tol=1e-9):
    """Solve lambda' + lambda^2 - C x^m = 0, lambda(0) = 0 on [0, R].

    Asserts the two-sided envelope
        C x^(m+1) / (2(m+1)) <= lambda(x) <= C x^(m+1) / (m+1)
    at every grid point; the domain must not exceed R0(C, m).  C = 0 is the
    forcing-free limit with lambda identically zero.
    """
    if C < 0 or m < 1 or R <= 0:
        raise ValueError("need C >= 0, m >= 1, R > 0")
    xs = np.linspace(0.0, R, n_grid)
    if C == 0.0:
        zero = np.zeros_like(xs)
        curve = RiccatiCurve(grid=xs, u=zero, converged=True, T_back=0.0, tol=tol)
        curve._dense = lambda x: np.zeros_like(np.asarray(x, dtype=float))
        curve._curvature = lambda x: 0.0
        return curve
    r0 = comparison_domain_limit(C, m)
    if R > r0 * (1.0 + 1e-9):
        raise DomainTooWide(f"R = {R:.6g} exceeds R0(C={C}, m={m}) = {r0:.6g}")

    sol = solve_ivp(
        lambda x, y: (C * x**m - y[0] * y[0],),
        (0.0, R),
        [0.0],
        method="DOP853",
        rtol=min(1e-12, tol * 1e-3),
        atol=1e-16,
        dense_output=True,
    )
    lam = sol.sol(xs)[0]
    lower = C * xs ** (m + 1) / (2.0 * (m + 1))
    upper = C * xs ** (m + 1) / (m + 1.0)
    slack = 1e-9 * (1.0 + upper)
    bad = (lam < lower - slack) | (lam > upper + slack)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise SandwichViolated(
            f"lambda({xs[i]:.4g}) = {lam[i]:.6g} outside "
            f"[{lower[i]:.6g}, {upper[i]:.6g}] (integrator defect)"
        )
    curve = RiccatiCurve(grid=xs, u=lam, converged=True, T_back=0.0, tol=tol)
    curve._dense = lambda x: sol.sol(np.asarray(x, dtype=float))[0]
    curve._curvature = lambda x: -C * float(x) ** m
    return curve


# ---------------------------------------------------------------------------
# backward-limit unstable solution along a host geodesic


def _host_curvature(model, traj):
    """Surface curvature K(tau) = -G_xx / G along an integrated host orbit."""

    warp_scalar = model.profile.warp_scalar

    def K(tau):
        s, x, _ = traj.sample(tau)
        g, _, gxx = warp_scalar(float(s), float(x))
        return -gxx / g

    return K


def solve_riccati_along(K, T_back, u_seed, rtol=1e-11):
    """Integrate u' = -u^2 - K(tau) from u(-T_back) = u_seed up to tau = 0."""

    def blow(t, y):
        return y[0] + 0.5

    blow.terminal, blow.direction = True, -1
    sol = solve_ivp(
        lambda t, y: (-y[0] * y[0] - K(t),),
        (-T_back, 0.0),
        [u_seed],
        method="DOP853",
        rtol=rtol,
        atol=1e-14,
        dense_output=True,
        events=[blow],
    )
    if sol.status == 1:
        raise BlowUp("Riccati solution left the nonnegative cone (step failure?)")
    if sol.status == -1:
        raise BlowUp(f"Riccati integration failed: {sol.message}")
    return sol


def _exactly_singular(model, state):
    """Hosts that are flat for all time: flat models and exact Sing states."""
    return model.profile.kind == "flat" or (state.x == 0.0 and state.phi == 0.0)


def unstable_riccati_limit(
    model,
    state,
    T_back=None,
    u_seed=1e3,
    *,
    convergence_tol=1e-8,
    T_max=8192.0,
    host_tol=1e-11,
    rtol=1e-11,
):
    """Backward-limit unstable Riccati solution along the geodesic through `state`.

    Doubles the lookback until u(0) moves by less than `convergence_tol`,
    then confirms insensitivity to the seed.  Hosts that are structurally
    flat for all time (flat models, exact singular states) carry the exact
    unstable solution u = 0, short-circuiting the 1/T crawl of the finite
    lookback.
    """
    if u_seed < 0:
        raise ValueError("u_seed must be nonnegative")
    T = float(T_back) if T_back is not None else 64.0

    if _exactly_singular(model, state):
        grid = np.linspace(-T, 0.0, 257)
        curve = RiccatiCurve(
            grid=grid, u=np.zeros_like(grid), converged=True, T_back=T, tol=convergence_tol
        )
        curve._dense = lambda t: np.zeros_like(np.asarray(t, dtype=float))
        curve._curvature = lambda t: 0.0
        return curve

    def u0_for(T_try):
        host = integrate(model, state, -T_try, tol=host_tol)
        if abs(host.t_end) < T_try * (1.0 - 1e-9):
            raise NotConverged(
                f"host orbit left the strip after {abs(host.t_end):.3g} < {T_try:.3g}; "
                "enlarge the model half-width X"
            )
        K = _host_curvature(model, host)
        sol = solve_riccati_along(K, T_try, u_seed, rtol=rtol)
        return float(sol.sol(0.0)[0]), sol, K

    u_prev, _, _ = u0_for(T)
    while True:
        T2 = 2.0 * T
        if T2 > T_max:
            raise NotConverged(
                f"no convergence by T_back = {T}: last two u0 values "
                f"{u_prev:.6g} (cap T_max = {T_max})"
            )
        u_curr, sol_curr, K_curr = u0_for(T2)
        if abs(u_curr - u_prev) < convergence_tol:
            sol_alt = solve_riccati_along(K_curr, T2, max(u_seed / 16.0, 1.0), rtol=rtol)
            u_alt = float(sol_alt.sol(0.0)[0])
            if abs(u_alt - u_curr) >= convergence_tol:
                raise NotConverged(
                    f"seed sensitivity {abs(u_alt - u_curr):.3g} at T_back = {T2}: "
                    f"u0(seed) = {u_curr:.6g}, u0(seed/16) = {u_alt:.6g}"
                )
            grid = np.linspace(-T2, 0.0, 513)
            curve = RiccatiCurve(
                grid=grid,
                u=sol_curr.sol(grid)[0],
                converged=True,
                T_back=T2,
                tol=convergence_tol,
            )
            curve._dense = lambda t: sol_curr.sol(np.asarray(t, dtype=float))[0]
            curve._curvature = K_curr
            return curve
        T, u_prev = T2, u_curr


# ---------------------------------------------------------------------------
# auxiliary potential psi_u and the geometric-potential gap bound


@dataclass(frozen=True)
class PotentialSample:
    """psi_u <= 0, the bound on |phi_u - psi_u|, and the regularity proxy."""

    psi_u: float
    gap_bound: float
    lambda_reg: float


def psi_u(model, v, **limit_kwargs):
    """Auxiliary potential psi_u(v) = -u(0) on a surface model.

    gap_bound = -psi_u * (psi_u^2 - Ric(v)) bounds |phi_u - psi_u|; on a
    surface Ric is the Gaussian curvature at the footpoint.  Higher
    dimensions go through the trace comparison bounds instead.
    """
    if model.n != 2:
        raise Unsupported("psi_u is exact on surfaces only; use trace_comparison_bounds")
    curve = unstable_riccati_limit(model, v, **limit_kwargs)
    u0 = curve.u0
    g, _, gxx = model.profile.warp_scalar(v.s, v.x)
    ric = -gxx / g
    psi = -u0
    return PotentialSample(psi_u=psi, gap_bound=-psi * (psi * psi - ric), lambda_reg=u0)


def trace_comparison_bounds(k1, K1, T, case, aux=None, n=2):
    """Two-sided bounds for -psi_u from Ricci pinching over a lookback window.

    case 1: Ric pinched in [-K1^2 T^-2, -k1^2 T^-2] on [-T, 0] gives
        k1 tanh(k1) / T <= -psi_u <= (n-1) K1 coth(K1) / T.
    case 2: Ric in [-K1^2 T^-2, 0] ahead of the base point, with
        -psi_u already pinched by (k3/T, K3/T) there, propagates to
        ((k1 + 1/k3)^-1 / T, (n-1) K1 coth(arccoth(K3/K1)) / T)
        over the stretch [0, k1 T].
    """
    if not (K1 > k1 > 0) or T <= 0:
        raise ValueError("need K1 > k1 > 0 and T > 0")
    if case == 1:
        return k1 * math.tanh(k1) / T, (n - 1) * K1 / math.tanh(K1) / T
    if case == 2:
        if aux is None:
            raise InvalidCase("case 2 requires aux = (k3, K3)")
        k3, K3 = aux
        if k3 <= 0:
            raise ValueError("k3 must be positive")
        if K3 <= K1:
            raise InvalidCase("case 2 requires K3 > K1 (arccoth domain)")
        arccoth = 0.5 * math.log((K3 / K1 + 1.0) / (K3 / K1 - 1.0))
        upper = (n - 1) * K1 / math.tanh(arccoth) / T
        lower = 1.0 / ((k1 + 1.0 / k3) * T)
        return lower, upper
    raise InvalidCase(f"unknown case {case!r}")


# ---------------------------------------------------------------------------
# near-singular scaling of psi_u


@dataclass(frozen=True)
class SampleWindow:
    """Rectangle of (x, phi) used to draw near-singular samples."""

    x_lo: float
    x_hi: float
    phi_lo: float
    phi_hi: float

    def __post_init__(self):
        if not (0.0 < self.x_lo < self.x_hi):
            raise ValueError("need 0 < x_lo < x_hi")


@dataclass
class ScalingEnvelope:
    """Measured envelope of -psi_u / (|x|^(m/2) + |phi|^(m/(m+2)))."""

    q_low: float
    q_high: float
    count: int
    rows: np.ndarray  # columns x, phi, psi_u, gap_bound, ratio

    @property
    def spread(self):
        return self.q_high / self.q_low


def scaling_check(model, m, sample_count, window, seed=0, **limit_kwargs):
    """Measure the scale ratio of -psi_u against |x|^(m/2) + |phi|^(m/(m+2)).

    Draws `sample_count` states in the window (x log-uniform, phi uniform)
    and returns the min/max ratio envelope; a finite positive envelope is
    the numerical content of the near-singular scale identity for the
    geometric potential.  The initial lookback per sample is warm-started at
    the escape-time scale x^(-m/2), which the doubling loop then confirms.
    """
    rng = np.random.default_rng(seed)
    # per-sample draws keep the streams nested: doubling sample_count at the
    # same seed reuses the first half exactly, so envelopes grow monotonely
    pairs = [
        (
            math.exp(rng.uniform(math.log(window.x_lo), math.log(window.x_hi))),
            rng.uniform(window.phi_lo, window.phi_hi),
        )
        for _ in range(sample_count)
    ]
    limit_kwargs.setdefault("host_tol", 1e-10)
    limit_kwargs.setdefault("rtol", 1e-10)
    rows = []
    for x, phi in pairs:
        denom = x ** (m / 2.0) + abs(phi) ** (m / (m + 2.0))
        if denom < 1e-12:
            raise DegenerateSample(f"denominator {denom:.3g} below 1e-12 at x={x}, phi={phi}")
        t_start = 2.0 ** math.ceil(math.log2(max(64.0, x ** (-m / 2.0))))
        kwargs = dict(limit_kwargs)
        kwargs.setdefault("T_back", t_start)
        sample = psi_u(model, PhaseState(0.0, float(x), float(phi)), **kwargs)
        rows.append([x, phi, sample.psi_u, sample.gap_bound, -sample.psi_u / denom])
    rows = np.asarray(rows)
    ratios = rows[:, 4]
    q_low, q_high = float(np.min(ratios)), float(np.max(ratios))
    if not (0.0 < q_low and np.isfinite(q_high)):
        raise DegenerateSample(f"ratio envelope degenerate: [{q_low:.3g}, {q_high:.3g}]")
    return ScalingEnvelope(q_low=q_low, q_high=q_high, count=sample_count, rows=rows)


def backward_band_time(model, state, lower, upper, t_cap=2e4, tol=1e-10):
    """Backward time the orbit's x stays inside [lower, upper].

    Used for the bouncing-vector dwell-time surrogate: near the singular set
    the dwell time in a dyadic band around x(0) grows like x(0)^(-m/2).
    """

    def ev_hi(t, y):
        return y[1] - upper

    def ev_lo(t, y):
        return y[1] - lower

    ev_hi.terminal = ev_lo.terminal = True
    ev_hi.direction, ev_lo.direction = 1, -1

    warp_scalar = model.profile.warp_scalar

    def rhs(t, y):
        g, gx, _ = warp_scalar(y[0], y[1])
        c = math.cos(y[2])
        return (c / g, math.sin(y[2]), gx / g * c)

    sol = solve_ivp(
        rhs,
        (0.0, -t_cap),
        state.as_array(),
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-2,
        events=[ev_hi, ev_lo],
    )
    return abs(float(sol.t[-1]))
