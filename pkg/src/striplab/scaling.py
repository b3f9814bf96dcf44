"""Power-law decay certificates for strip orbits and the key inequality.

Everything here certifies two-sided envelopes of the form
    Q^-1 ref(tau) <= series(tau) <= Q ref(tau)
on sampled grids, reporting the smallest constant Q that works, together
with log-log exponent fits and the uniform lower bound for potential
integrals along shadowing orbits and their Bowen-ball neighbors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import beta as beta_function

from .errors import (
    BoundViolated,
    ConclusionViolated,
    HypothesisViolated,
    InsufficientData,
    RegimeMismatch,
)
from .geodesics import PhaseState, descent_angle, descent_orbit, integrate, phase_distance, shadow_map
from .pressure import evaluate_potential_arrays

REGIMES = ("type1_bouncing", "type1_asymptotic", "type1_crossing", "type2_shadowing")


def graded_grid(lo, hi, n=1001):
    """Grid on [lo, hi], geometrically refined toward both endpoints."""
    span = hi - lo
    if span <= 0:
        raise ValueError("need lo < hi")
    half = max(8, n // 2)
    d0 = span * 1e-8
    left = lo + np.geomspace(d0, span / 2, half)
    right = hi - np.geomspace(d0, span / 2, half)
    return np.unique(np.concatenate([[lo], left, right[::-1], [hi]]))


def fit_loglog_exponent(taus, ys, window):
    """Least-squares slope of log y against log(tau + 1) over the window.

    Returns (slope, stderr).  Requires at least 20 points with y > 0 in
    the window.
    """
    taus = np.asarray(taus, dtype=float)
    ys = np.asarray(ys, dtype=float)
    lo, hi = window
    mask = (taus >= lo) & (taus <= hi) & (ys > 0)
    if int(np.sum(mask)) < 20:
        raise InsufficientData(f"only {int(np.sum(mask))} usable points in window {window}")
    X = np.log(taus[mask] + 1.0)
    Y = np.log(ys[mask])
    n = len(X)
    xm, ym = X.mean(), Y.mean()
    sxx = float(np.sum((X - xm) ** 2))
    slope = float(np.sum((X - xm) * (Y - ym)) / sxx)
    resid = Y - ym - slope * (X - xm)
    stderr = math.sqrt(float(np.sum(resid**2)) / max(n - 2, 1) / sxx)
    return slope, stderr


# ---------------------------------------------------------------------------
# decay-bound certification


@dataclass
class DecayReport:
    """Smallest sandwich constant plus exponent fits for one regime run."""

    m: int
    regime: str
    Q_min: float
    fit_x: float
    fit_phi: float
    witness: float
    extras: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "m": self.m,
            "regime": self.regime,
            "Q_min": self.Q_min,
            "fit_x": self.fit_x,
            "fit_phi": self.fit_phi,
            "witness": self.witness,
        }


def _sandwich_q(taus, series, reference, floor=0.0):
    """Per-point constants for Q^-1 ref <= series <= Q ref; returns (q, tau*)."""
    mask = (reference > floor) & (series > 0)
    if not np.any(mask):
        raise BoundViolated("no usable points for a sandwich", witness=float(taus[0]))
    up = series[mask] / reference[mask]
    lo = reference[mask] / series[mask]
    q = np.maximum(up, lo)
    i = int(np.argmax(q))
    return float(q[i]), float(np.asarray(taus)[mask][i])


def _one_sided_q(taus, series, reference, side, floor=0.0):
    mask = (reference > floor) & (series > 0)
    vals = series[mask] / reference[mask] if side == "upper" else reference[mask] / series[mask]
    i = int(np.argmax(vals))
    return float(vals[i]), float(np.asarray(taus)[mask][i])


def _default_crossing_defect(m):
    # the reduced generator takes the defect as an exact parameter, so it can
    # sit far below double rounding of the angle chart; 1e-12 puts the
    # crossing time around 1e3 (m = 2) to 1e4 (m = 4)
    return 1e-12


def _regime_series(model, m, regime, t, R, shadow_tol, integrator_tol, crossing_defect, grid_points):
    """Build (taus, x, |phi|, horizon, extras) for the requested regime."""
    s_dep = model.profile.s_dependent
    if regime in ("type1_bouncing", "type1_asymptotic", "type1_crossing") and s_dep:
        raise RegimeMismatch("type 1 regimes need an s-independent power-like profile")
    if regime == "type2_shadowing" and not s_dep:
        raise RegimeMismatch("type 2 regime needs an s-dependent surface profile")

    if regime in ("type1_bouncing", "type2_shadowing"):
        tol = shadow_tol if shadow_tol is not None else max(1e-6, 1e-5 * t)
        sr = shadow_map(model, 0.0, t, R, tol=tol, integrator_tol=integrator_tol)
        horizon = sr.t_turn
        taus = graded_grid(0.0, horizon * (1.0 - 1e-9), grid_points)
        states = sr.trajectory.sample(taus)
        return taus, states[1], np.abs(states[2]), horizon, {"shadow": sr}

    if regime == "type1_asymptotic":
        dense, t_stop, kind = descent_orbit(model, R, t, clairaut_defect=0.0, tol=integrator_tol)
        taus = graded_grid(0.0, min(t, t_stop), grid_points)
        x = dense(taus)[0]
        return taus, x, descent_angle(model, x, 0.0), math.inf, {"kind": kind}

    if regime == "type1_crossing":
        defect = -abs(crossing_defect if crossing_defect is not None else _default_crossing_defect(m))
        dense, t0, kind = descent_orbit(model, R, 1e7, clairaut_defect=defect, tol=integrator_tol)
        if kind != "crossing":
            raise RegimeMismatch("crossing launch failed to reach x = 0")
        taus = graded_grid(0.0, t0 * (1.0 - 1e-9), max(grid_points, 2001))
        x = dense(taus)[0]
        return taus, x, descent_angle(model, x, defect), t0, {"t0": t0}

    raise RegimeMismatch(f"unknown regime {regime!r}")


def verify_decay_bounds(
    model,
    m,
    regime,
    t,
    R,
    *,
    check_t_doubling=True,
    shadow_tol=None,
    integrator_tol=1e-12,
    crossing_defect=None,
    grid_points=1001,
    fit_window=None,
):
    """Certify the regime's decay sandwiches and fit their exponents.

    Bouncing/shadowing regimes check, on [0, t_turn]:
        Q^-1 (tau+1)^(-2/m) <= x <= Q (tau+1)^(-2/m)
        |phi| against the bracket (tau+1)^(-(m+2)/m) - (t_turn+1)^(-(m+2)/m)
    with the phi lower bound restricted to [0, t_turn - 2 sqrt(2) gamma0]
    in the type 2 regime.  The asymptotic regime checks the pure power laws;
    the crossing regime swaps the roles of x and phi around the crossing
    time.  Q_min is the smallest constant making every sampled inequality
    true; for the shadowing regimes the run is repeated at 2t and a change
    of Q_min by 2x or more raises BoundViolated (the t-independence claim).
    """
    if regime not in REGIMES:
        raise RegimeMismatch(f"unknown regime {regime!r}")
    taus, x, aphi, horizon, extras = _regime_series(
        model, m, regime, t, R, shadow_tol, integrator_tol, crossing_defect, grid_points
    )
    if np.any(x <= 0) and regime != "type1_crossing":
        i = int(np.argmax(x <= 0))
        raise BoundViolated("x lost positivity on a bouncing-type orbit", witness=float(taus[i]))

    p_x = 2.0 / m
    p_phi = (m + 2.0) / m
    ref_x = (taus + 1.0) ** (-p_x)
    ref_phi = (taus + 1.0) ** (-p_phi)
    qs = []

    if regime in ("type1_bouncing", "type2_shadowing"):
        tt = horizon
        bracket = ref_phi - (tt + 1.0) ** (-p_phi)
        qs.append(_sandwich_q(taus, x, ref_x))
        qs.append(_one_sided_q(taus, aphi, bracket, "upper", floor=1e-12))
        if regime == "type1_bouncing":
            qs.append(_one_sided_q(taus, aphi, bracket, "lower", floor=1e-12))
        else:
            t_restrict = tt - 2.0 * math.sqrt(2.0) * model.gamma0
            if t_restrict > 0:
                sel = taus <= t_restrict
                qs.append(
                    _one_sided_q(taus[sel], aphi[sel], bracket[sel], "lower", floor=1e-12)
                )
        fw = fit_window or (max(10.0, 0.15 * tt), tt / 3.0)
        fit_x = fit_loglog_exponent(taus, x, fw)
        fit_phi = fit_loglog_exponent(taus, aphi, fw)

    elif regime == "type1_asymptotic":
        qs.append(_sandwich_q(taus, x, ref_x))
        qs.append(_sandwich_q(taus, aphi, ref_phi, floor=1e-300))
        fw = fit_window or (0.01 * taus[-1], 0.5 * taus[-1])
        fit_x = fit_loglog_exponent(taus, x, fw)
        fit_phi = fit_loglog_exponent(taus, aphi, fw)

    else:  # type1_crossing
        t0 = extras["t0"]
        bracket_x = ref_x - (t0 + 1.0) ** (-p_x)
        qs.append(_sandwich_q(taus, x, bracket_x, floor=1e-9))
        qs.append(_sandwich_q(taus, aphi, ref_phi, floor=1e-300))
        fw = fit_window or (t0 / 16.0, t0 / 6.0)
        fit_x = fit_loglog_exponent(taus, x, fw)
        fit_phi = fit_loglog_exponent(taus, aphi, fw)

    q_min, witness = max(qs, key=lambda qw: qw[0])
    if not np.isfinite(q_min):
        raise BoundViolated("sandwich constant diverged", witness=witness)

    extras.update(
        {
            "t": t,
            "horizon": horizon,
            "fit_x_stderr": fit_x[1],
            "fit_phi_stderr": fit_phi[1],
            "series": np.column_stack([taus, x, aphi]),
        }
    )
    report = DecayReport(
        m=m,
        regime=regime,
        Q_min=q_min,
        fit_x=fit_x[0],
        fit_phi=fit_phi[0],
        witness=witness,
        extras=extras,
    )

    if check_t_doubling and regime in ("type1_bouncing", "type2_shadowing"):
        doubled = verify_decay_bounds(
            model,
            m,
            regime,
            2.0 * t,
            R,
            check_t_doubling=False,
            shadow_tol=shadow_tol,
            integrator_tol=integrator_tol,
            grid_points=grid_points,
        )
        ratio = doubled.Q_min / q_min
        report.extras["q_min_doubled"] = doubled.Q_min
        if not (0.5 < ratio < 2.0):
            raise BoundViolated(
                f"Q_min unstable under t doubling: {q_min:.4g} -> {doubled.Q_min:.4g}",
                witness=witness,
            )
    return report


# ---------------------------------------------------------------------------
# discontinuous-ODE comparison lemma


@dataclass(frozen=True)
class LemmaCheckReport:
    q0: float
    pieces: int
    lower_checked: bool
    max_upper_margin: float
    min_lower_margin: float


def lemma_q0(alpha, beta):
    """Q0 = B(beta, 1 - beta)^(1 / (alpha beta - 1)) from the comparison lemma."""
    return float(beta_function(beta, 1.0 - beta)) ** (1.0 / (alpha * beta - 1.0))


def check_ode_discont_lemma(
    pieces,
    alpha,
    beta,
    Q1,
    Q2,
    *,
    hypothesis_rtol=2e-2,
    conclusion_rtol=1e-9,
    envelope_floor=1e-4,
):
    """Verify the decreasing-function comparison lemma on sampled data.

    `pieces` is a list of (tau, f) sample pairs: smooth segments of a
    strictly decreasing function, possibly dropping across segment seams.
    The hypothesis -Q2 (f^a - f(b)^a)^b <= f' <= -Q1 (...)^b is checked by
    central differences inside each piece (skipping points whose envelope
    value has decayed below `envelope_floor` of its initial size, where a
    finite stencil cannot resolve the ratio).  The conclusion sandwich with
    Q0 = B(beta, 1-beta)^(1/(alpha beta - 1)) is then asserted: the upper
    bound always, the lower bound only for continuous inputs (a downward
    jump can push f below it, and the lemma's own use never relies on the
    jumpy lower bound).
    """
    if not (alpha > 0 and 0 < beta < 1 and alpha * beta > 1):
        raise ValueError("need alpha > 0, beta in (0,1), alpha*beta > 1")
    if not (0 < Q1 < Q2):
        raise ValueError("need 0 < Q1 < Q2")
    pieces = [(np.asarray(t, dtype=float), np.asarray(f, dtype=float)) for t, f in pieces]
    if not pieces:
        raise ValueError("no pieces supplied")

    all_t = np.concatenate([p[0] for p in pieces])
    all_f = np.concatenate([p[1] for p in pieces])
    if np.any(np.diff(all_t) <= 0):
        raise HypothesisViolated("tau samples must be strictly increasing")
    if np.any(np.diff(all_f) >= 0):
        raise HypothesisViolated("f increases somewhere: not strictly decreasing")
    f_b = float(all_f[-1])
    if f_b <= 0:
        raise HypothesisViolated("f(b) must be positive")
    f_a = float(all_f[0])
    a = float(all_t[0])

    env_scale = f_a**alpha - f_b**alpha
    for taus, fs in pieces:
        if len(taus) < 3:
            continue
        df = (fs[2:] - fs[:-2]) / (taus[2:] - taus[:-2])
        env = (np.maximum(fs[1:-1] ** alpha - f_b**alpha, 0.0)) ** beta
        usable = (fs[1:-1] ** alpha - f_b**alpha) > envelope_floor * env_scale
        hi = -Q1 * env[usable] * (1.0 - hypothesis_rtol)
        lo = -Q2 * env[usable] * (1.0 + hypothesis_rtol)
        if np.any(df[usable] > hi + 1e-12) or np.any(df[usable] < lo - 1e-12):
            raise HypothesisViolated("derivative left the two-sided envelope")

    q0 = lemma_q0(alpha, beta)
    expo = 1.0 / (1.0 - alpha * beta)
    base_up = f_a ** (1.0 - alpha * beta) + Q1 * (alpha * beta - 1.0) * (all_t - a)
    upper = q0 * base_up**expo
    up_margin = float(np.min(upper - all_f))
    if np.any(all_f > upper * (1.0 + conclusion_rtol) + 1e-12):
        i = int(np.argmax(all_f - upper))
        raise ConclusionViolated(
            f"upper conclusion failed at tau = {all_t[i]:.6g}: f = {all_f[i]:.6g} > {upper[i]:.6g}"
        )
    lower_checked = len(pieces) == 1
    lo_margin = math.inf
    if lower_checked:
        base_lo = f_a ** (1.0 - alpha * beta) + Q2 * (alpha * beta - 1.0) * (all_t - a)
        lower = base_lo**expo
        lo_margin = float(np.min(all_f - lower))
        if np.any(all_f < lower * (1.0 - conclusion_rtol) - 1e-12):
            i = int(np.argmax(lower - all_f))
            raise ConclusionViolated(
                f"lower conclusion failed at tau = {all_t[i]:.6g}: "
                f"f = {all_f[i]:.6g} < {lower[i]:.6g}"
            )
    return LemmaCheckReport(
        q0=q0,
        pieces=len(pieces),
        lower_checked=lower_checked,
        max_upper_margin=up_margin,
        min_lower_margin=lo_margin,
    )


def measure_envelope(pieces, alpha, beta):
    """Empirical (Q1, Q2) ratio envelope of -f' against (f^a - f(b)^a)^b."""
    pieces = [(np.asarray(t, dtype=float), np.asarray(f, dtype=float)) for t, f in pieces]
    f_b = float(pieces[-1][1][-1])
    f_a = float(pieces[0][1][0])
    env_scale = f_a**alpha - f_b**alpha
    ratios = []
    for taus, fs in pieces:
        if len(taus) < 3:
            continue
        df = (fs[2:] - fs[:-2]) / (taus[2:] - taus[:-2])
        raw = fs[1:-1] ** alpha - f_b**alpha
        usable = raw > 1e-4 * env_scale
        ratios.append(-df[usable] / raw[usable] ** beta)
    ratios = np.concatenate(ratios)
    return float(np.min(ratios)), float(np.max(ratios))


def make_synthetic_decreasing(rng, alpha, beta, n_pieces=1, n_steps=400):
    """Random strictly decreasing data satisfying the lemma's hypothesis.

    Integrates f' = -q(tau) (f^a - F^a)^b with a smooth q(tau) in [Q1, Q2]
    (RK4), jumping f downward between pieces, until f lands tangentially on
    the floor F.  Returns (pieces, Q1, Q2).
    """
    Q1 = float(rng.uniform(0.2, 1.0))
    Q2 = Q1 * float(rng.uniform(1.5, 4.0))
    F = float(rng.uniform(0.05, 0.5))
    f = F * float(rng.uniform(2.0, 6.0))
    omega = float(rng.uniform(0.5, 3.0))
    phase = float(rng.uniform(0.0, 2 * math.pi))
    mix = float(rng.uniform(0.1, 0.9))

    def q(tau):
        s = 0.5 * (1.0 + math.sin(omega * tau + phase))
        return Q1 + (Q2 - Q1) * (0.1 + 0.8 * (mix * s + (1 - mix) * 0.5))

    def fprime(tau, val):
        inner = val**alpha - F**alpha
        return -q(tau) * inner**beta if inner > 0 else 0.0

    jump_at = set()
    if n_pieces > 1:
        jump_at = set(rng.choice(np.arange(20, n_steps - 20), size=n_pieces - 1, replace=False))
    pieces = []
    cur_t, cur_f = [0.0], [f]
    tau = 0.0
    for i in range(n_steps):
        h = min(0.05 * cur_f[-1] / (abs(fprime(tau, cur_f[-1])) + 1e-9), 2.0)
        k1 = fprime(tau, cur_f[-1])
        k2 = fprime(tau + h / 2, cur_f[-1] + h * k1 / 2)
        k3 = fprime(tau + h / 2, cur_f[-1] + h * k2 / 2)
        k4 = fprime(tau + h, cur_f[-1] + h * k3)
        nxt = cur_f[-1] + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        tau += h
        if nxt <= F * (1.0 + 1e-7) or nxt >= cur_f[-1]:
            break
        cur_t.append(tau)
        cur_f.append(nxt)
        if i in jump_at and nxt > 1.3 * F:
            pieces.append((np.array(cur_t), np.array(cur_f)))
            dropped = max(F * 1.2, nxt * float(rng.uniform(0.7, 0.95)))
            tau += 1e-6
            cur_t, cur_f = [tau], [dropped]
    if len(cur_t) >= 3:
        pieces.append((np.array(cur_t), np.array(cur_f)))
    return pieces, Q1, Q2


# ---------------------------------------------------------------------------
# key inequality


@dataclass
class KeyInequalityReport:
    """Potential integrals along shadow orbits and Bowen-ball neighbors."""

    t_list: list
    integrals: dict
    lower_envelope: float
    bounded: bool

    def to_json_dict(self):
        return {
            "t_list": list(self.t_list),
            "integrals": {str(t): vals for t, vals in self.integrals.items()},
            "lower_envelope": self.lower_envelope,
            "bounded": self.bounded,
        }


def _orbit_integral(model, potential, traj, t, grid_points=2001):
    taus = graded_grid(0.0, min(t, traj.t_end), grid_points)
    states = traj.sample(taus)
    vals = evaluate_potential_arrays(potential, model, states[1], states[2]) - potential.C0
    return float(np.trapezoid(vals, taus))


def key_inequality_integral(
    model,
    potential,
    t_list,
    R,
    delta,
    perturbations=6,
    *,
    seed=0,
    shadow_tol=None,
    integrator_tol=1e-12,
    perturb_tol=1e-10,
    grid_points=2001,
    stability_rtol=0.05,
    series_out=None,
):
    """Integrals of (potential - C0) along shadow orbits and Bowen neighbors.

    For each t, builds the shadowing orbit, draws `perturbations` states in
    its d_t ball of radius delta (rejection sampling of coordinate boxes),
    and integrates the centered potential over [0, t] for every orbit.  The
    lower envelope over all orbits and horizons is the measured key-
    inequality constant; `bounded` records whether the envelope moved by
    less than `stability_rtol` between the two largest horizons.
    """
    if potential.kind != "power_law":
        from .errors import Unsupported

        raise Unsupported("key-inequality integrals support power-law potentials")
    rng = np.random.default_rng(seed)
    t_list = sorted(float(t) for t in t_list)
    integrals = {}
    for t in t_list:
        tol = shadow_tol if shadow_tol is not None else max(1e-6, 1e-5 * t)
        sr = shadow_map(model, 0.0, t, R, tol=tol, integrator_tol=integrator_tol)
        base = sr.trajectory
        vals = [_orbit_integral(model, potential, base, t, grid_points)]
        if series_out is not None:
            taus = graded_grid(0.0, min(t, base.t_end), min(grid_points, 1001))
            states = base.sample(taus)
            pot_vals = evaluate_potential_arrays(potential, model, states[1], states[2])
            series_out[f"orbit_t{t:g}"] = np.column_stack([taus, states[1], states[2], pot_vals])
        step = max(t / 512.0, 0.25)
        ref_taus = np.arange(0.0, min(t, base.t_end) + 0.5 * step, step)
        ref_states = base.sample(ref_taus)
        accepted = 0
        attempts = 0
        while accepted < perturbations and attempts < 40 * perturbations:
            attempts += 1
            ds, dx, dphi = rng.uniform(-delta / 2, delta / 2, 3)
            x0 = min(max(sr.w.x + dx, 1e-9), model.X * (1 - 1e-9))
            phi0 = min(max(sr.w.phi + dphi, -math.pi / 2 + 1e-9), math.pi / 2 - 1e-9)
            cand = PhaseState(sr.w.s + ds, x0, phi0)
            traj = integrate(model, cand, t * (1 + 1e-9), tol=perturb_tol)
            if traj.t_end < min(t, base.t_end) * (1 - 1e-9):
                continue
            d = float(np.max(phase_distance(model, traj.sample(ref_taus), ref_states)))
            if d >= delta:
                continue
            vals.append(_orbit_integral(model, potential, traj, t, grid_points))
            accepted += 1
        integrals[t] = vals
    envelopes = {t: min(vals) for t, vals in integrals.items()}
    lower_envelope = min(envelopes.values())
    if len(t_list) >= 2:
        e1, e2 = envelopes[t_list[-2]], envelopes[t_list[-1]]
        bounded = abs(e2 - e1) <= stability_rtol * max(abs(e1), 1e-9)
    else:
        bounded = True
    return KeyInequalityReport(
        t_list=t_list,
        integrals=integrals,
        lower_envelope=float(lower_envelope),
        bounded=bool(bounded),
    )
