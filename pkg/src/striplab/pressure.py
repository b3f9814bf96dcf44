"""Thermodynamic side: potentials, separated-set pressure, gap certificates.

The potential family is C0 - C (|x|^a + |phi|^b) near the singular set,
smoothly saturated to a constant far from it.  The pressure-gap lower bound
comes from the orbit-gluing count: inserting shadowed singular segments at
density alpha into long orbits wins entropy H(alpha) against a per-insertion
cost c, and sup over alpha of (H(alpha) - alpha c) / xi has the closed form
ln(1 + e^-c) / xi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import EscapeNotObserved, Unsupported
from .geodesics import integrate, phase_distance, shadow_map
from .riccati import psi_u as _psi_u_sample


# ---------------------------------------------------------------------------
# potential family


@dataclass(frozen=True)
class PotentialSpec:
    """Potential constant on Sing, decaying like |x|^a + |phi|^b nearby."""

    kind: str  # "power_law" | "geometric"
    C0: float = 0.0
    C: float = 1.0
    a: float = 1.0
    b: float = 1.0
    R_cut: float = 1.0
    m: int = 2

    def __post_init__(self):
        if self.kind not in ("power_law", "geometric"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "power_law":
            if self.C < 0:
                raise ValueError("amplitude C must be nonnegative")
            if self.a <= 0 or self.b <= 0 or self.R_cut <= 0:
                raise ValueError("exponents a, b and R_cut must be positive")

    @property
    def rho_cap(self):
        return self.R_cut**self.a + self.R_cut**self.b

    def describe(self):
        return {
            "kind": self.kind,
            "C0": self.C0,
            "C": self.C,
            "a": self.a,
            "b": self.b,
            "R_cut": self.R_cut,
            "m": self.m,
        }


def _saturate(rho, rho_cap):
    """Identity below rho_cap, C^1 cubic blend to the plateau 4/3 rho_cap."""
    z = (np.asarray(rho, dtype=float) - rho_cap) / rho_cap
    blend = rho_cap * (1.0 + z - z * z + z**3 / 3.0)
    out = np.where(z <= 0.0, rho, np.where(z >= 1.0, 4.0 * rho_cap / 3.0, blend))
    return out


def evaluate_potential_arrays(spec, model, xs, phis):
    """Vectorized power-law potential over coordinate arrays."""
    if spec.kind != "power_law":
        raise Unsupported("array evaluation is defined for power-law potentials")
    rho = np.abs(xs) ** spec.a + np.abs(phis) ** spec.b
    return spec.C0 - spec.C * _saturate(rho, spec.rho_cap)


def evaluate_potential(spec, model, v):
    """Potential value at a phase state.

    The geometric kind returns the Riccati-computed auxiliary potential
    psi_u (surfaces only); its deviation from the true geometric potential
    is bounded by the accompanying gap_bound of the sample.
    """
    if spec.kind == "power_law":
        return float(evaluate_potential_arrays(spec, model, np.asarray(v.x), np.asarray(v.phi)))
    return _psi_u_sample(model, v).psi_u


def potential_sup_norm(spec):
    """sup |potential| over the unit tangent bundle (power-law kind)."""
    if spec.kind != "power_law":
        raise Unsupported("sup norm is closed-form for power-law potentials only")
    return abs(spec.C0) + spec.C * 4.0 * spec.rho_cap / 3.0


REGION_HAS_GAP = "has_gap"
REGION_BOUNDARY_VERTEX = "boundary_vertex"
REGION_BOUNDARY = "boundary"
REGION_OUTSIDE = "outside"


def classify_potential_region(a, b, m, tol=1e-12):
    """Locate (a, b) against the gap region {a > m/2, b > m/(m+2)}.

    The vertex (m/2, m/(m+2)) is where the geometric potential sits; the
    two boundary rays carry decay exactly at the critical exponents.
    """
    if a <= 0 or b <= 0 or m < 1:
        raise ValueError("need a, b > 0 and m >= 1")
    a_crit = m / 2.0
    b_crit = m / (m + 2.0)
    a_eq = abs(a - a_crit) <= tol * max(1.0, a_crit)
    b_eq = abs(b - b_crit) <= tol * max(1.0, b_crit)
    if a_eq and b_eq:
        return REGION_BOUNDARY_VERTEX
    if (a_eq and b > b_crit) or (b_eq and a > a_crit):
        return REGION_BOUNDARY
    if a > a_crit and b > b_crit:
        return REGION_HAS_GAP
    return REGION_OUTSIDE


def sing_pressure(spec):
    """Pressure restricted to the singular set.

    The singular flow is an isometric translation family (zero entropy) on
    which the potential is the constant C0, so the restricted pressure is
    exactly C0 (0 for the geometric kind, which vanishes on Sing).
    """
    return 0.0 if spec.kind == "geometric" else float(spec.C0)


# ---------------------------------------------------------------------------
# escape time


@dataclass
class EscapeReport:
    L: float
    per_orbit: list
    epsilon: float
    R: float
    prediction: float | None = None
    ratio: float | None = None


def escape_time_L(
    model,
    epsilon,
    R,
    sample_t_list,
    *,
    s0_list=(0.0,),
    shadow_tol=None,
    integrator_tol=1e-12,
    q_hint=None,
    grid_points=4001,
):
    """Measured escape time L(epsilon, R) over sampled shadow orbits.

    L is the largest time any sampled orbit needs before its phase distance
    to the singular set max(|x|, |phi|) stays below epsilon on [L, t - L].
    Raises EscapeNotObserved when an orbit never descends below epsilon or
    when t <= 2L leaves the middle interval empty.  With `q_hint` (a decay
    constant) the analytic prediction (q_hint / epsilon)^(m/2) and its ratio
    to the measurement are attached.
    """
    if not (0.0 < epsilon <= R <= model.X):
        raise ValueError("need 0 < epsilon <= R <= X")
    per_orbit = []
    for t in sample_t_list:
        for s0 in s0_list:
            tol = shadow_tol if shadow_tol is not None else max(1e-6, 1e-5 * t)
            sr = shadow_map(model, s0, t, R, tol=tol, integrator_tol=integrator_tol)
            taus = np.linspace(0.0, min(t, sr.trajectory.t_end), grid_points)
            states = sr.trajectory.sample(taus)
            rho = np.maximum(np.abs(states[1]), np.abs(states[2]))
            below = rho < epsilon
            if not np.any(below):
                raise EscapeNotObserved(
                    f"orbit (t={t}, s0={s0}) never descended below epsilon = {epsilon}"
                )
            first = float(taus[int(np.argmax(below))])
            last = float(taus[len(below) - 1 - int(np.argmax(below[::-1]))])
            if rho[0] <= epsilon:
                first = 0.0
            L_orbit = max(first, t - last)
            if t <= 2.0 * L_orbit:
                raise EscapeNotObserved(
                    f"midpoint check failed: t = {t} <= 2 L = {2 * L_orbit:.4g}"
                )
            per_orbit.append({"t": t, "s0": s0, "L": L_orbit})
    L = max(row["L"] for row in per_orbit)
    report = EscapeReport(L=L, per_orbit=per_orbit, epsilon=epsilon, R=R)
    if q_hint is not None:
        m = model.order or 2
        report.prediction = (q_hint / epsilon) ** (m / 2.0)
        report.ratio = L / report.prediction if report.prediction > 0 else math.inf
    return report


# ---------------------------------------------------------------------------
# pressure-gap certificate


@dataclass
class GapCertificate:
    """Quantitative lower bound for the pressure gap from the gluing count."""

    transition_time: float
    escape_time: float
    xi: float
    key_constant: float
    phi_norm: float
    alpha_opt: float
    gap: float
    provenance: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "transition_time": self.transition_time,
            "escape_time": self.escape_time,
            "xi": self.xi,
            "key_constant": self.key_constant,
            "phi_norm": self.phi_norm,
            "alpha_opt": self.alpha_opt,
            "gap": self.gap,
            "provenance": self.provenance,
        }


def insertion_rate(alpha, c):
    """Entropy-vs-cost rate H(alpha) - alpha c of inserting at density alpha."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    H = -alpha * math.log(alpha) - (1.0 - alpha) * math.log(1.0 - alpha)
    return H - alpha * c


def gap_lower_bound(C_key, phi_norm, transition_time, L, provenance=None):
    """Closed-form pressure-gap lower bound ln(1 + e^-c) / xi.

    xi = transition_time + 2L is the slot length of one glued block and
    c = transition_time * phi_norm + C_key the worst-case potential cost of
    one insertion; the supremum over insertion densities alpha of
    (H(alpha) - alpha c) / xi is attained at alpha = 1 / (1 + e^c) and is
    strictly positive for every finite cost.
    """
    if min(C_key, phi_norm, L) < 0 or transition_time <= 0:
        raise ValueError("need C_key, phi_norm, L >= 0 and transition_time > 0")
    xi = transition_time + 2.0 * L
    c = transition_time * phi_norm + C_key
    gap = math.log1p(math.exp(-c)) / xi
    alpha_opt = math.exp(-c) / (1.0 + math.exp(-c))
    return GapCertificate(
        transition_time=transition_time,
        escape_time=L,
        xi=xi,
        key_constant=C_key,
        phi_norm=phi_norm,
        alpha_opt=alpha_opt,
        gap=gap,
        provenance=provenance or {},
    )


# ---------------------------------------------------------------------------
# separated-set pressure estimate


@dataclass
class SeparatedSetEstimate:
    """Greedy (t, delta)-separated partition sum and its pressure estimate."""

    delta: float
    t: float
    count: int
    log_partition_sum: float
    p_hat: float
    selected: list

    @property
    def partition_sum(self):
        return math.exp(self.log_partition_sum)

    def to_json_dict(self):
        return {
            "delta": self.delta,
            "t": self.t,
            "count": self.count,
            "log_partition_sum": self.log_partition_sum,
            "p_hat": self.p_hat,
            "selected": list(self.selected),
        }


def lambda_estimate(model, spec, delta, t, seeds, *, step=None, tol=1e-10, grid_points=1001):
    """Greedy separated-set lower bound for the partition sum.

    Seeds are processed in order (first fit): a seed joins the separated set
    when its d_t distance to every already-selected orbit is >= delta, so
    appending refinement seeds can only grow the count.  The partition sum
    adds e^(integral of the potential) over selected orbits; P_hat is its
    log divided by t.  Seeds whose orbit leaves the strip before time t are
    skipped (they are not length-t segments of the strip model).
    """
    if delta <= 0 or t <= 0:
        raise ValueError("delta and t must be positive")
    step = step if step is not None else max(min(t / 256.0, 0.5), 0.05)
    taus = np.arange(0.0, t + 0.5 * step, step)
    taus[-1] = min(taus[-1], t)
    kept = []
    for idx, seed in enumerate(seeds):
        traj = integrate(model, seed, t * (1 + 1e-9), tol=tol)
        if traj.t_end < t * (1 - 1e-9):
            continue
        kept.append((idx, traj, traj.sample(taus)))
    selected = []
    for idx, traj, samples in kept:
        ok = True
        for _, _, chosen in selected:
            if float(np.max(phase_distance(model, samples, chosen))) < delta:
                ok = False
                break
        if ok:
            selected.append((idx, traj, samples))
    if not selected:
        return SeparatedSetEstimate(
            delta=delta, t=t, count=0, log_partition_sum=-math.inf, p_hat=-math.inf, selected=[]
        )
    phis = []
    quad_taus = np.linspace(0.0, t, grid_points)
    for _, traj, _ in selected:
        states = traj.sample(quad_taus)
        vals = evaluate_potential_arrays(spec, model, states[1], states[2])
        phis.append(float(np.trapezoid(vals, quad_taus)))
    log_lambda = float(logsumexp(np.asarray(phis)))
    return SeparatedSetEstimate(
        delta=delta,
        t=t,
        count=len(selected),
        log_partition_sum=log_lambda,
        p_hat=log_lambda / t,
        selected=[idx for idx, _, _ in selected],
    )
