"""Geodesic flow in Fermi coordinates (s, x, phi) on a strip model.

The state is a unit tangent vector: s along the torus, x the signed distance
to it, phi the signed angle to the hypersurface {x = const} (phi = pi/2 is
the vertical direction d/dx).  The flow is

    ds/dtau  = cos(phi) / G
    dx/dtau  = sin(phi)
    dphi/dtau = (G_x / G) cos(phi)

which reproduces x'' = (G_x/G) cos^2(phi).  For s-independent profiles
G(x) * cos(phi) is a first integral (Clairaut); its drift along a computed
orbit is the integrator quality gauge used throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    Inconclusive,
    NoConvergence,
    OutOfStrip,
    SeparationViolated,
    StepFailure,
    StripTooWide,
    Unsupported,
)
from .geometry import MetricModel

EVENT_ENTER_STRIP = "EnterStrip"
EVENT_EXIT_STRIP = "ExitStrip"
EVENT_TURNING = "Turning"
EVENT_ZERO_CROSSING = "ZeroCrossing"
EVENT_RETURN = "Return"

_TOL_RANGE = (1e-14, 1e-6)


@dataclass(frozen=True)
class PhaseState:
    """Unit tangent vector in Fermi coordinates at flow time tau."""

    s: float
    x: float
    phi: float
    tau: float = 0.0

    def __post_init__(self):
        if abs(self.phi) > math.pi / 2 + 1e-12:
            raise ValueError("phi must lie in [-pi/2, pi/2]")

    def as_array(self):
        return np.array([self.s, self.x, self.phi])


@dataclass(frozen=True)
class Event:
    kind: str
    time: float


@dataclass
class Trajectory:
    """Integrated geodesic with dense output and event log."""

    model: MetricModel
    t: np.ndarray
    y: np.ndarray  # shape (3, len(t)); rows s, x, phi
    events: list
    tol: float
    t_end: float
    terminated: str | None = None
    clairaut_drift: float | None = None
    _sol: object = field(default=None, repr=False)

    @property
    def initial(self):
        return PhaseState(self.y[0, 0], self.y[1, 0], self.y[2, 0], self.t[0])

    def sample(self, taus):
        """Dense-output states at the requested times, shape (3, len(taus))."""
        return self._sol(np.asarray(taus, dtype=float))

    def state_at(self, tau):
        s, x, phi = self._sol(tau)
        return PhaseState(float(s), float(x), float(phi), float(tau))

    def x_at(self, taus):
        return self.sample(taus)[1]

    def phi_at(self, taus):
        return self.sample(taus)[2]

    def first_event(self, kind):
        for ev in self.events:
            if ev.kind == kind:
                return ev
        return None

    def csv_rows(self, taus=None):
        """Rows (tau, s, x, phi, clairaut) for export."""
        if taus is None:
            taus = self.t
        states = self.sample(taus)
        if self.model.profile.s_dependent:
            inv = np.full_like(taus, np.nan)
        else:
            g, _, _ = self.model.profile.warp(0.0, states[1])
            inv = g * np.cos(states[2])
        return np.column_stack([np.asarray(taus), states[0], states[1], states[2], inv])


def geodesic_rhs(model, state):
    """Flow derivatives (ds, dx, dphi)/dtau at a phase state."""
    model.check_in_strip(state.x)
    g, gx, _ = model.profile.warp_scalar(state.s, state.x)
    cphi = math.cos(state.phi)
    return (cphi / g, math.sin(state.phi), gx / g * cphi)


def clairaut_invariant(model, state):
    """First integral G(x) * cos(phi); s-independent profiles only."""
    if model.profile.s_dependent:
        raise Unsupported("Clairaut invariant requires an s-independent profile")
    g, _, _ = model.profile.warp(0.0, state.x)
    return float(g) * math.cos(state.phi)


def _drift(model, sol, t_lo, t_hi, n=2048):
    taus = np.linspace(t_lo, t_hi, n)
    states = sol(taus)
    g, _, _ = model.profile.warp(0.0, states[1])
    inv = g * np.cos(states[2])
    return float(np.max(np.abs(inv - inv[0])))


def integrate(
    model,
    state0,
    t_max,
    tol=1e-10,
    *,
    strip_radius=None,
    terminate_on_radius_exit=False,
    terminate_on_zero=False,
    terminate_on_return=None,
):
    """Integrate the geodesic flow from `state0` for (signed) time `t_max`.

    Events are located on the dense output: Turning (phi = 0), ZeroCrossing
    (x = 0), and Enter/ExitStrip crossings of |x| = strip_radius when a
    radius is given.  Integration always halts when |x| reaches the model
    half-width X; optional terminal triggers provide early exits for the
    classification and shadowing drivers:

    - terminate_on_radius_exit: stop at outward crossings of |x| = strip_radius
    - terminate_on_zero:        stop when x reaches 0
    - terminate_on_return:      stop at upward crossings of x = value
    """
    if not (_TOL_RANGE[0] <= tol <= _TOL_RANGE[1]):
        raise ValueError(f"tol must lie in [{_TOL_RANGE[0]}, {_TOL_RANGE[1]}]")
    model.check_in_strip(state0.x)
    profile = model.profile
    X = model.X
    backward = t_max < 0

    warp_scalar = profile.warp_scalar

    def rhs(t, y):
        g, gx, _ = warp_scalar(y[0], y[1])
        c = math.cos(y[2])
        return (c / g, math.sin(y[2]), gx / g * c)

    # Event `direction` refers to the sign change of the event value along
    # the solver's march, so boundary exits keep direction +1/-1 for both
    # forward and backward runs (|x| grows along the march either way).
    def ev_upper(t, y):
        return y[1] - X

    def ev_lower(t, y):
        return y[1] + X

    ev_upper.terminal, ev_upper.direction = True, 1
    ev_lower.terminal, ev_lower.direction = True, -1

    def ev_turn(t, y):
        return y[2]

    ev_turn.terminal, ev_turn.direction = False, 0

    def ev_zero(t, y):
        return y[1]

    ev_zero.terminal, ev_zero.direction = bool(terminate_on_zero), 0

    events = [ev_upper, ev_lower, ev_turn, ev_zero]
    terminal_labels = {0: "strip_boundary", 1: "strip_boundary"}
    if terminate_on_zero:
        terminal_labels[3] = "zero"

    radius_idx = None
    if strip_radius is not None:
        R = float(strip_radius)

        def ev_rad_up(t, y):
            return y[1] - R

        def ev_rad_down(t, y):
            return y[1] + R

        ev_rad_up.terminal = ev_rad_down.terminal = False
        ev_rad_up.direction = ev_rad_down.direction = 0
        radius_idx = len(events)
        events += [ev_rad_up, ev_rad_down]
        if terminate_on_radius_exit:

            def ev_out_up(t, y):
                return y[1] - R

            def ev_out_down(t, y):
                return y[1] + R

            ev_out_up.terminal = ev_out_down.terminal = True
            ev_out_up.direction, ev_out_down.direction = 1, -1
            terminal_labels[len(events)] = "radius"
            terminal_labels[len(events) + 1] = "radius"
            events += [ev_out_up, ev_out_down]

    return_idx = None
    if terminate_on_return is not None:
        xr = float(terminate_on_return)

        def ev_ret(t, y):
            return y[1] - xr

        ev_ret.terminal, ev_ret.direction = True, 1
        return_idx = len(events)
        terminal_labels[return_idx] = "return"
        events.append(ev_ret)

    sol = solve_ivp(
        rhs,
        (0.0, t_max),
        state0.as_array(),
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-2,
        dense_output=True,
        events=events,
    )
    if sol.status == -1:
        raise StepFailure(f"integrator failed: {sol.message}")

    recorded = []
    for idx in (0, 1):
        for te in sol.t_events[idx]:
            recorded.append(Event(EVENT_EXIT_STRIP, float(te)))
    for te in sol.t_events[2]:
        recorded.append(Event(EVENT_TURNING, float(te)))
    for te in sol.t_events[3]:
        recorded.append(Event(EVENT_ZERO_CROSSING, float(te)))
    if radius_idx is not None:
        march = -1.0 if backward else 1.0
        for k in (radius_idx, radius_idx + 1):
            for te, ye in zip(sol.t_events[k], sol.y_events[k]):
                outward = ye[1] * math.sin(ye[2]) * march > 0
                recorded.append(
                    Event(EVENT_EXIT_STRIP if outward else EVENT_ENTER_STRIP, float(te))
                )
    if return_idx is not None:
        for te in sol.t_events[return_idx]:
            recorded.append(Event(EVENT_RETURN, float(te)))
    recorded.sort(key=lambda e: abs(e.time))

    terminated = None
    if sol.status == 1:
        t_fin = sol.t[-1]
        for idx, label in terminal_labels.items():
            if sol.t_events[idx].size and math.isclose(
                sol.t_events[idx][-1], t_fin, rel_tol=0.0, abs_tol=1e-9 * (1 + abs(t_fin))
            ):
                terminated = label
                break

    traj = Trajectory(
        model=model,
        t=sol.t,
        y=sol.y,
        events=recorded,
        tol=tol,
        t_end=float(sol.t[-1]),
        terminated=terminated,
        _sol=sol.sol,
    )
    if not profile.s_dependent:
        traj.clairaut_drift = _drift(model, sol.sol, 0.0, traj.t_end)
    return traj


def reflected_conservation_orbit(model, state0, t_total, reflect_at, tol=1e-12):
    """Accumulate `t_total` of flow time, reflecting phi -> -phi at |x| = reflect_at.

    On models where every geodesic escapes the strip (constant curvature),
    this billiard-style concatenation keeps the chart well conditioned while
    preserving the Clairaut invariant across reflections, so the reported
    drift isolates pure integrator error over the full horizon.  Returns
    (drift, legs).
    """
    if model.profile.s_dependent:
        raise Unsupported("conservation gate requires an s-independent profile")
    if reflect_at >= model.X:
        raise ValueError("reflect_at must be inside the strip")
    inv0 = clairaut_invariant(model, state0)
    drift = 0.0
    legs = 0
    state = state0
    remaining = t_total
    while remaining > 1e-9:
        traj = integrate(
            model,
            state,
            remaining,
            tol=tol,
            strip_radius=reflect_at,
            terminate_on_radius_exit=True,
        )
        taus = np.linspace(0.0, traj.t_end, 1024)
        states = traj.sample(taus)
        g, _, _ = model.profile.warp(0.0, states[1])
        inv = g * np.cos(states[2])
        drift = max(drift, float(np.max(np.abs(inv - inv0))))
        legs += 1
        s_e, x_e, phi_e = traj.sample(traj.t_end)
        state = PhaseState(float(s_e), float(x_e), -float(phi_e))
        remaining -= traj.t_end
        if traj.t_end <= 1e-12:
            raise NoConvergence("reflection orbit stalled")
    return drift, legs


# ---------------------------------------------------------------------------
# classification (bouncing / asymptotic / crossing)


@dataclass(frozen=True)
class VectorClass:
    """Strip trichotomy with entry/exit times and the relevant event time."""

    kind: str  # "bouncing" | "asymptotic" | "crossing"
    T1: float
    T2: float
    t_turn: float | None = None
    t_cross: float | None = None


def _decay_signature(traj):
    """True when the far end shows x' pointing at the torus with shrinking speed."""
    t_end = traj.t_end
    if t_end == 0.0:
        return False
    sign = 1.0 if t_end > 0 else -1.0
    taus = sign * np.linspace(0.6 * abs(t_end), abs(t_end), 64)
    xdots = np.sin(traj.phi_at(taus)) * sign
    if np.any(xdots >= 0):
        return False
    return bool(np.all(np.diff(-xdots) <= 1e-14))


def classify_vector(model, state0, R, horizon=1e5, tol=1e-10):
    """Classify a vector relative to the strip |x| < R.

    Integrates forward and backward until the orbit leaves the strip or the
    horizon is reached.  Returns Bouncing (with the first minimizer t_turn of
    x), Crossing (with the first forward zero t_cross), or Asymptotic when a
    horizon is reached under a monotone decay signature; otherwise raises
    Inconclusive.
    """
    if not (0.0 < state0.x <= R <= model.X):
        raise OutOfStrip("classification requires 0 < x <= R <= X")
    fwd = integrate(
        model, state0, horizon, tol=tol, strip_radius=R, terminate_on_radius_exit=True
    )
    bwd = integrate(
        model, state0, -horizon, tol=tol, strip_radius=R, terminate_on_radius_exit=True
    )
    T2 = abs(fwd.t_end) if fwd.terminated in ("radius", "strip_boundary") else math.inf
    T1 = abs(bwd.t_end) if bwd.terminated in ("radius", "strip_boundary") else math.inf

    zeros = [ev.time for ev in fwd.events if ev.kind == EVENT_ZERO_CROSSING]
    zeros += [ev.time for ev in bwd.events if ev.kind == EVENT_ZERO_CROSSING]
    if zeros:
        forward_zeros = [z for z in zeros if z >= 0]
        t_cross = min(forward_zeros) if forward_zeros else max(zeros)
        return VectorClass(kind="crossing", T1=T1, T2=T2, t_cross=float(t_cross))

    if math.isinf(T2) or math.isinf(T1):
        leg = fwd if math.isinf(T2) else bwd
        if _decay_signature(leg):
            return VectorClass(kind="asymptotic", T1=T1, T2=T2)
        raise Inconclusive("horizon reached without a monotone decay signature")

    turns = [ev.time for ev in fwd.events if ev.kind == EVENT_TURNING and ev.time > 0]
    t_turn = min(turns) if turns else 0.0
    return VectorClass(kind="bouncing", T1=T1, T2=T2, t_turn=float(t_turn))


# ---------------------------------------------------------------------------
# shadowing map


@dataclass
class ShadowResult:
    """Shadowing vector returned by the boundary-value construction."""

    w: PhaseState
    t: float
    s1: float
    residual: float
    iterations: int
    t_turn: float
    trajectory: Trajectory


def _return_time(model, s0, R, phi0, t_cap, tol):
    """Time of first return to x = R, or +inf when the orbit crosses x = 0
    or fails to come back within t_cap.

    The launch height is nudged one part in 1e14 inside the strip so the
    return-event function starts strictly negative; otherwise a first solver
    step that jumps over a very shallow dip reports a spurious return at 0.
    """
    state = PhaseState(s0, R * (1.0 - 1e-14), phi0)
    traj = integrate(
        model,
        state,
        t_cap,
        tol=tol,
        terminate_on_zero=True,
        terminate_on_return=R,
    )
    if traj.terminated == "return":
        return float(traj.first_event(EVENT_RETURN).time), traj
    return math.inf, traj


def shadow_map(model, s0, t, R, tol=1e-6, *, integrator_tol=1e-12, max_iter=90):
    """Construct the shadowing vector for the singular segment of length t.

    Finds the strip geodesic of length t joining (s0, R) to a point (s1, R)
    by shooting on the launch angle phi0 in (-pi/2, 0): the first-return
    time to height R grows monotonically with the launch depth, so bisection
    on phi0 drives it to t.  The endpoint coordinate s1 is read off the
    converged orbit.  `tol` bounds the residual |T_return - t| (endpoint
    miss at unit speed); the flow integrates at `integrator_tol`.
    """
    if not (0.0 < R <= model.X):
        raise OutOfStrip("need 0 < R <= X")
    if t <= 0:
        raise ValueError("segment length t must be positive")
    if model.profile.kind == "flat":
        state = PhaseState(s0, R, 0.0)
        traj = integrate(model, state, t, tol=integrator_tol)
        return ShadowResult(
            w=state, t=t, s1=s0 + t, residual=0.0, iterations=0, t_turn=0.5 * t, trajectory=traj
        )

    t_cap = 1.25 * t + 10.0
    lo = -math.pi / 2 + 1e-9  # steep: crossing, treated as infinite return time
    hi = -1e-9  # shallow: immediate return
    T_hi, _ = _return_time(model, s0, R, hi, t_cap, integrator_tol)
    if not T_hi < t:
        raise NoConvergence("shallow bracket already exceeds t; R or t out of range")

    best = (math.inf, None)
    iterations = 0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        T_mid, _ = _return_time(model, s0, R, mid, t_cap, integrator_tol)
        iterations += 1
        if math.isfinite(T_mid) and abs(T_mid - t) < best[0]:
            best = (abs(T_mid - t), mid)
        if math.isfinite(T_mid) and abs(T_mid - t) <= 0.5 * tol:
            break
        if T_mid > t:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    if best[1] is None:
        raise NoConvergence("shadow shooting never produced a finite return time")

    phi0 = best[1]
    if abs(phi0) >= math.pi / 4:
        raise StripTooWide(f"|phi_w| = {abs(phi0):.4f} >= pi/4: R = {R} above admissible range")

    T_ret, final = _return_time(model, s0, R, phi0, t_cap, integrator_tol)
    if not math.isfinite(T_ret):
        raise NoConvergence("converged angle no longer returns at final tolerance")
    ret = final.first_event(EVENT_RETURN)
    residual = abs(ret.time - t)
    if residual > tol:
        raise NoConvergence(
            f"shadow residual {residual:.3g} exceeds tol {tol:.3g} after {iterations} iterations"
        )
    turn = final.first_event(EVENT_TURNING)
    t_turn = turn.time if turn is not None else 0.5 * t
    phis = final.phi_at(np.linspace(0.0, ret.time, 512))
    if np.max(np.abs(phis)) >= math.pi / 4:
        raise StripTooWide("orbit angle reached pi/4 along the shadow segment")
    return ShadowResult(
        w=PhaseState(s0, R, phi0),
        t=t,
        s1=float(final.sample(ret.time)[0]),
        residual=residual,
        iterations=iterations,
        t_turn=float(t_turn),
        trajectory=final,
    )


# ---------------------------------------------------------------------------
# d_t phase metric and separation


def _circ_dist(ds, gamma0):
    d = np.mod(np.abs(ds), gamma0)
    return np.minimum(d, gamma0 - d)


def phase_distance(model, a, b):
    """max(|ds| mod gamma0, |dx|, |dphi|) between two state arrays (3, N)."""
    ds = _circ_dist(a[0] - b[0], model.gamma0)
    return np.max(np.stack([ds, np.abs(a[1] - b[1]), np.abs(a[2] - b[2])]), axis=0)


def dt_distance(model, v1, v2, t, step=0.25, tol=1e-10, trajectories=None):
    """Bowen metric d_t: max phase distance along the two orbits up to t."""
    if step <= 0:
        raise ValueError("step must be positive")
    if trajectories is None:
        tr1 = integrate(model, v1, t * (1 + 1e-9), tol=tol)
        tr2 = integrate(model, v2, t * (1 + 1e-9), tol=tol)
    else:
        tr1, tr2 = trajectories
    t_common = min(tr1.t_end, tr2.t_end, t)
    taus = np.arange(0.0, t_common + 0.5 * step, step)
    taus[-1] = min(taus[-1], t_common)
    return float(np.max(phase_distance(model, tr1.sample(taus), tr2.sample(taus))))


@dataclass(frozen=True)
class SeparationReport:
    passed: bool
    count: int
    worst_pair: tuple
    worst_value: float
    threshold: float


def separated_preservation_check(model, E, t, delta, R, *, step=0.25, shadow_tol=1e-6):
    """Check that shadowing preserves (t, delta)-separation down to delta/4.

    E is a list of singular s-coordinates; it must itself be (t, delta)-
    separated (for singular translations d_t is the circle distance).  Each
    seed is mapped through the shadowing map and all pairs are required to
    stay (t, delta/4)-separated; the worst pair is reported.
    """
    E = list(E)
    for i in range(len(E)):
        for j in range(i + 1, len(E)):
            d = float(_circ_dist(np.asarray(E[i] - E[j]), model.gamma0))
            if d < delta:
                raise SeparationViolated(
                    f"seed pair ({i}, {j}) only {d:.3g} < delta = {delta:.3g} apart"
                )
    shadows = [shadow_map(model, s0, t, R, tol=shadow_tol) for s0 in E]
    taus = np.arange(0.0, t + 0.5 * step, step)
    samples = [sh.trajectory.sample(np.minimum(taus, sh.trajectory.t_end)) for sh in shadows]
    worst = (math.inf, (-1, -1))
    for i in range(len(E)):
        for j in range(i + 1, len(E)):
            d = float(np.max(phase_distance(model, samples[i], samples[j])))
            if d < worst[0]:
                worst = (d, (i, j))
    threshold = delta / 4.0
    if worst[0] < threshold:
        raise SeparationViolated(
            f"shadow pair {worst[1]} at d_t = {worst[0]:.4g} < delta/4 = {threshold:.4g}"
        )
    return SeparationReport(
        passed=True,
        count=len(E),
        worst_pair=worst[1],
        worst_value=worst[0],
        threshold=threshold,
    )


# ---------------------------------------------------------------------------
# Clairaut-reduced descent generators (s-independent profiles)


def _descent_rhs(profile, kappa_minus_1):
    """Reduced descent ODE dx/dtau = -sqrt((G - kappa)(G + kappa)) / G.

    kappa is the Clairaut constant; G - kappa is evaluated through the
    cancellation-free warp excess so the generator stays accurate deep in
    the tail where G - 1 falls below double rounding of G itself.
    """

    def rhs(t, y):
        gm1 = float(profile.warp_excess(0.0, y[0]))
        diff = gm1 - kappa_minus_1
        if diff <= 0.0:
            return [0.0]
        g = 1.0 + gm1
        kappa = 1.0 + kappa_minus_1
        return [-math.sqrt(diff * (g + kappa)) / g]

    return rhs


def descent_orbit(model, R, tau_max, clairaut_defect=0.0, tol=1e-12):
    """Integrate the descending leg with prescribed Clairaut defect.

    clairaut_defect u = G(x_min) - 1 parametrizes the orbit family through
    (*, R) exactly: u > 0 bounces at x_min, u = 0 is the forward-asymptotic
    orbit, u < 0 crosses x = 0.  Because u enters as a parameter rather
    than as a float subtraction of nearby angles, the generator reaches
    depths (x ~ 1e-5 and beyond) that the angle chart cannot represent.
    Returns (dense_x, t_stop, kind): a callable tau -> [x], the crossing
    time for u < 0 (else tau_max), and the realized kind.
    """
    if model.profile.s_dependent:
        raise Unsupported("reduced generator requires an s-independent profile")
    gm1_R = float(model.profile.warp_excess(0.0, R))
    if clairaut_defect >= gm1_R:
        raise ValueError("defect must be below G(R) - 1 for a descending launch")

    rhs = _descent_rhs(model.profile, clairaut_defect)

    def ev_zero(t, y):
        return y[0]

    ev_zero.terminal, ev_zero.direction = True, -1
    sol = solve_ivp(
        rhs,
        (0.0, tau_max),
        [R],
        method="DOP853",
        rtol=tol,
        atol=1e-300,
        dense_output=True,
        events=[ev_zero],
    )
    if sol.status == -1:
        raise StepFailure(sol.message)
    if sol.t_events[0].size:
        t_stop = float(sol.t_events[0][0])
        kind = "crossing"
    else:
        t_stop = float(sol.t[-1])
        kind = "asymptotic" if clairaut_defect == 0 else "descent"
    return sol.sol, t_stop, kind


def descent_angle(model, x, clairaut_defect):
    """|phi| along a reduced descent orbit, stable near the singular set.

    cos(phi) = kappa / G gives |phi| = 2 asin(sqrt(delta / 2)) with
    delta = (G - kappa) / G, again through the warp excess.
    """
    gm1 = np.asarray(model.profile.warp_excess(0.0, x), dtype=float)
    delta = (gm1 - clairaut_defect) / (1.0 + gm1)
    delta = np.clip(delta, 0.0, 2.0)
    return 2.0 * np.arcsin(np.sqrt(0.5 * delta))


def launch_angle(model, R, clairaut_defect):
    """Signed launch angle phi0 < 0 realizing the given Clairaut defect at x = R."""
    return -float(descent_angle(model, np.asarray(R), clairaut_defect))
