"""Config-driven experiment runner.

Each subcommand validates a YAML config, runs one pipeline built from the
library modules, and writes `report.json`, `series/*.csv`, and `summary.txt`
into the output directory.  Identical config + seed produce byte-identical
reports regardless of the parallelism degree.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 a certified
bound was violated.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import geometry
from .config import build_model, load_config
from .errors import BoundViolationError, ConfigError, OrderMismatch, StripLabError
from .geodesics import PhaseState, integrate, shadow_map
from .pressure import (
    REGION_HAS_GAP,
    classify_potential_region,
    escape_time_L,
    gap_lower_bound,
    lambda_estimate,
    potential_sup_norm,
    sing_pressure,
)
from .reports import config_hash, write_report
from .riccati import psi_u, solve_comparison_riccati, unstable_riccati_limit
from .scaling import key_inequality_integral, verify_decay_bounds
from .pressure import PotentialSpec  # noqa: F401  (re-exported for workers)

SERIES_GRID = 2001


def _parallel_map(fn, items, jobs):
    """Order-preserving map; the pool never changes results, only wall time."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _field_worker(args):
    profile_block, model_block, x, phi = args
    model = build_model(profile_block, model_block)
    sample = psi_u(model, PhaseState(0.0, float(x), float(phi)))
    return [float(x), float(phi), sample.psi_u, sample.gap_bound]


def _orbit_series(traj, t_end=None, n=SERIES_GRID):
    t_end = traj.t_end if t_end is None else t_end
    taus = np.linspace(0.0, t_end, n)
    return traj.csv_rows(taus)


# ---------------------------------------------------------------------------
# experiment runners: each returns (results, series, summary_lines)


def run_curvature(cfg):
    model = cfg.model
    p = cfg.params
    xs = np.geomspace(float(p["x_lo"]), float(p["x_hi"]), int(p["grid"]))
    if model.profile.kind == "flat":
        xs = np.linspace(0.0, model.X * 0.9, int(p["grid"]))
    s_values = [0.0]
    if model.profile.s_dependent:
        lo, hi = p.get("s_window") or (0.0, model.gamma0)
        s_values = list(np.linspace(float(lo), float(hi), 17))
    rows = []
    for s in s_values:
        g, gx, gxx = geometry.eval_metric(model, s, xs)
        kperp = -gxx / g
        rows.append(np.column_stack([np.full_like(xs, s), xs, g, gx, gxx, kperp, gx / g]))
    rows = np.vstack(rows)
    results = {
        "kind": model.profile.kind,
        "max_abs_K_perp": float(np.max(np.abs(rows[:, 5]))),
        "K_perp_nonpositive": bool(np.all(rows[:, 5] <= 1e-15)),
    }
    if p.get("certificates") and model.order is not None:
        x_range = (float(p["x_lo"]), float(p["x_hi"]))
        certs = {}
        if model.profile.s_dependent:
            window = (0.0, model.profile.gamma1)
            c1, c2 = geometry.verify_curvature_order(
                model, x_range, int(p["grid"]), s_values=np.linspace(*window, 33)
            )
            certs["K_perp_window"] = {"C1": c1, "C2": c2, "s_window": list(window)}
            try:
                geometry.verify_curvature_order(model, x_range, int(p["grid"]))
                certs["K_perp_uniform"] = {"holds": True}
            except OrderMismatch as exc:
                # expected for the nonuniform family: no full-period order-m bound
                certs["K_perp_uniform"] = {"holds": False, "reason": str(exc)}
        else:
            c1, c2 = geometry.verify_curvature_order(model, x_range, int(p["grid"]))
            certs["K_perp"] = {"C1": c1, "C2": c2}
            c1, c2 = geometry.warp_excess_certificate(model, x_range, int(p["grid"]))
            certs["warp_excess"] = {"C1": c1, "C2": c2}
            c1, c2 = geometry.ricci_order_certificate(model, x_range, int(p["grid"]))
            certs["ricci_theta0"] = {"C1": c1, "C2": c2}
        results["order"] = model.order
        results["certificates"] = certs
    series = {"curvature": ("s,x,G,G_x,G_xx,K_perp,principal", rows)}
    return results, series, [f"curvature grid on {model.profile.kind}: ok"]


def run_geodesic(cfg):
    p = cfg.params
    state = PhaseState(float(p["s0"]), float(p["x0"]), float(p["phi0"]))
    traj = integrate(
        cfg.model,
        state,
        float(p["t_max"]),
        tol=float(p["tol"]),
        strip_radius=p.get("strip_radius"),
    )
    results = {
        "t_end": traj.t_end,
        "terminated": traj.terminated,
        "clairaut_drift": traj.clairaut_drift,
        "events": [{"kind": ev.kind, "time": ev.time} for ev in traj.events],
    }
    series = {"trajectory": ("tau,s,x,phi,clairaut", _orbit_series(traj))}
    lines = [
        f"geodesic from (s={state.s}, x={state.x}, phi={state.phi}) for t={p['t_max']}",
        f"  realized t_end={traj.t_end:.6g} terminated={traj.terminated}",
        f"  clairaut drift={traj.clairaut_drift}",
        f"  events={len(traj.events)}",
    ]
    return results, series, lines


def run_shadow(cfg):
    p = cfg.params
    sr = shadow_map(
        cfg.model, float(p["s0"]), float(p["t"]), float(p["R"]), tol=float(p["tol"])
    )
    results = {
        "w": {"s": sr.w.s, "x": sr.w.x, "phi": sr.w.phi},
        "t": sr.t,
        "s1": sr.s1,
        "residual": sr.residual,
        "iterations": sr.iterations,
        "t_turn": sr.t_turn,
    }
    series = {"shadow_orbit": ("tau,s,x,phi,clairaut", _orbit_series(sr.trajectory, sr.t))}
    lines = [
        f"shadow segment t={sr.t} R={p['R']}: phi0={sr.w.phi:.8g}",
        f"  s1={sr.s1:.8g} residual={sr.residual:.3g} iterations={sr.iterations}",
        f"  turning time={sr.t_turn:.6g}",
    ]
    return results, series, lines


def run_riccati(cfg):
    p = cfg.params
    mode = p["mode"]
    if mode == "comparison":
        curve = solve_comparison_riccati(float(p["C"]), int(p["m"]), float(p["R"]))
        lower = float(p["C"]) * curve.grid ** (int(p["m"]) + 1) / (2 * (int(p["m"]) + 1))
        upper = float(p["C"]) * curve.grid ** (int(p["m"]) + 1) / (int(p["m"]) + 1)
        results = {
            "mode": mode,
            "sandwich_holds": True,
            "u_end": float(curve.u[-1]),
            "residual": curve.residual(),
        }
        series = {
            "comparison": ("x,u,lower,upper", np.column_stack([curve.grid, curve.u, lower, upper]))
        }
        return results, series, [f"comparison Riccati C={p['C']} m={p['m']} R={p['R']}: sandwich ok"]
    if mode == "limit":
        state = PhaseState(float(p["s0"]), float(p["x0"]), float(p["phi0"]))
        kwargs = {}
        if "T_back" in p:
            kwargs["T_back"] = float(p["T_back"])
        if "T_max" in p:
            kwargs["T_max"] = float(p["T_max"])
        curve = unstable_riccati_limit(cfg.model, state, u_seed=float(p["u_seed"]), **kwargs)
        results = {
            "mode": mode,
            "u0": curve.u0,
            "converged": curve.converged,
            "T_back": curve.T_back,
        }
        series = {"riccati_curve": ("tau,u", np.column_stack([curve.grid, curve.u]))}
        return results, series, [f"unstable limit at x0={p['x0']}: u0={curve.u0:.8g}"]

    rng = np.random.default_rng(cfg.seed)
    n = int(p["count"])
    xs = np.exp(rng.uniform(math.log(float(p["x_lo"])), math.log(float(p["x_hi"])), n))
    phis = rng.uniform(float(p["phi_lo"]), float(p["phi_hi"]), n)
    items = [
        (cfg.raw.get("profile"), cfg.raw.get("model"), float(x), float(phi))
        for x, phi in zip(xs, phis)
    ]
    rows = np.asarray(_parallel_map(_field_worker, items, cfg.jobs))
    results = {
        "mode": mode,
        "count": n,
        "psi_u_min": float(np.min(rows[:, 2])),
        "psi_u_max": float(np.max(rows[:, 2])),
        "gap_bound_max": float(np.max(rows[:, 3])),
    }
    series = {"psi_u_field": ("x,phi,psi_u,gap_bound", rows)}
    return results, series, [f"psi_u field: {n} samples, min={results['psi_u_min']:.6g}"]


def run_decay(cfg):
    p = cfg.params
    report = verify_decay_bounds(
        cfg.model,
        cfg.model.order or 2,
        p["regime"],
        float(p["t"]),
        float(p["R"]),
        check_t_doubling=bool(p["check_t_doubling"]),
        shadow_tol=p.get("shadow_tol"),
        crossing_defect=p.get("crossing_defect"),
    )
    details = {
        "t": report.extras.get("t"),
        "horizon": report.extras.get("horizon"),
        "fit_x_stderr": report.extras.get("fit_x_stderr"),
        "fit_phi_stderr": report.extras.get("fit_phi_stderr"),
    }
    if "q_min_doubled" in report.extras:
        details["q_min_doubled"] = report.extras["q_min_doubled"]
    results = {"decay": report.to_json_dict(), "details": details}
    series = {"decay_series": ("tau,x,abs_phi", report.extras["series"])}
    lines = [
        f"decay regime={report.regime} m={report.m}: Q_min={report.Q_min:.6g}",
        f"  fit_x={report.fit_x:.6g} fit_phi={report.fit_phi:.6g} witness={report.witness:.6g}",
    ]
    return results, series, lines


def run_key_inequality(cfg):
    p = cfg.params
    series_out = {}
    report = key_inequality_integral(
        cfg.model,
        cfg.potential,
        [float(t) for t in p["t_list"]],
        float(p["R"]),
        float(p["delta"]),
        perturbations=int(p["perturbations"]),
        seed=cfg.seed,
        shadow_tol=p.get("shadow_tol"),
        series_out=series_out,
    )
    results = {"key_inequality": report.to_json_dict(), "potential": cfg.potential.describe()}
    series = {
        name: ("tau,x,phi,potential", rows) for name, rows in series_out.items()
    }
    lines = [
        f"key inequality over t={report.t_list}: lower envelope={report.lower_envelope:.6g}",
        f"  bounded={report.bounded}",
    ]
    return results, series, lines


def run_pressure_gap(cfg):
    p = cfg.params
    pot = cfg.potential
    m = cfg.model.order or 2
    region = classify_potential_region(pot.a, pot.b, m)
    results = {
        "potential": pot.describe(),
        "region": region,
        "sing_pressure": sing_pressure(pot),
        "certificate": None,
    }
    lines = [f"exponents (a={pot.a}, b={pot.b}, m={m}) -> region {region}"]
    if region != REGION_HAS_GAP:
        lines.append("no certificate issued: exponents outside the open gap region")
        return results, {}, lines

    t_list = [float(t) for t in p["t_list"]]
    key = key_inequality_integral(
        cfg.model,
        pot,
        t_list,
        float(p["R"]),
        float(p["delta"]),
        perturbations=int(p["perturbations"]),
        seed=cfg.seed,
        shadow_tol=p.get("shadow_tol"),
    )
    results["key_inequality"] = key.to_json_dict()
    if not key.bounded:
        lines.append("no certificate issued: key-inequality envelope not t-stable")
        return results, {}, lines
    c_key = max(0.0, -key.lower_envelope)
    esc = escape_time_L(
        cfg.model,
        float(p["epsilon"]),
        float(p["R"]),
        [max(t_list)],
        shadow_tol=p.get("shadow_tol"),
    )
    phi_norm = potential_sup_norm(pot)
    cert = gap_lower_bound(
        c_key,
        phi_norm,
        float(p["transition_time"]),
        esc.L,
        provenance={
            "config_hash": config_hash(cfg.raw),
            "model": cfg.model.describe(),
            "potential": pot.describe(),
            "C_key": c_key,
            "L": esc.L,
            "epsilon": float(p["epsilon"]),
            "key_lower_envelope": key.lower_envelope,
        },
    )
    results["certificate"] = cert.to_json_dict()
    lines += [
        f"C_key={c_key:.6g} L={esc.L:.6g} phi_norm={phi_norm:.6g}",
        f"gap lower bound = {cert.gap:.8g} (alpha_opt={cert.alpha_opt:.4g}, xi={cert.xi:.4g})",
    ]
    return results, {}, lines


def _build_seeds(model, block, rng):
    kind = block["kind"]
    count = int(block["count"])
    if kind == "sing_grid":
        return [
            PhaseState(s, 0.0, 0.0) for s in np.arange(count) * (model.gamma0 / count)
        ]
    xs = np.exp(
        rng.uniform(
            math.log(float(block.get("x_lo", 1e-3))),
            math.log(float(block.get("x_hi", model.X * 0.8))),
            count,
        )
    )
    phis = rng.uniform(float(block.get("phi_lo", -0.3)), float(block.get("phi_hi", 0.3)), count)
    ss = rng.uniform(0.0, model.gamma0, count)
    return [PhaseState(float(s), float(x), float(phi)) for s, x, phi in zip(ss, xs, phis)]


def run_lambda(cfg):
    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    seeds = _build_seeds(cfg.model, p["seeds"], rng)
    est = lambda_estimate(cfg.model, cfg.potential, float(p["delta"]), float(p["t"]), seeds)
    results = {
        "lambda": est.to_json_dict(),
        "potential": cfg.potential.describe(),
        "sing_pressure": sing_pressure(cfg.potential),
    }
    lines = [
        f"lambda estimate: count={est.count} P_hat={est.p_hat:.8g} (delta={p['delta']}, t={p['t']})"
    ]
    return results, {}, lines


_RUNNERS = {
    "curvature": run_curvature,
    "geodesic": run_geodesic,
    "shadow": run_shadow,
    "riccati": run_riccati,
    "decay": run_decay,
    "key_inequality": run_key_inequality,
    "pressure_gap": run_pressure_gap,
    "lambda": run_lambda,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="striplab",
        description="numerical laboratory for geodesic flows near flat strips",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (
        "curvature",
        "geodesic",
        "shadow",
        "riccati",
        "decay",
        "key-inequality",
        "pressure-gap",
        "lambda",
        "validate",
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment YAML config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--jobs", type=int, default=None, help="parallel workers")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config)")
        p.add_argument("--quiet", action="store_true", help="suppress the summary printout")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    command = args.command.replace("-", "_")
    try:
        cfg = load_config(args.config)
        if command != "validate" and cfg.kind != command:
            raise ConfigError(
                "experiment", f"config declares kind {cfg.kind!r} but subcommand is {command!r}"
            )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.out is not None:
        cfg.output = args.out

    if command == "validate":
        if not args.quiet:
            print(f"config OK: experiment {cfg.kind} on {cfg.model.profile.kind} profile")
        return 0

    try:
        results, series, lines = _RUNNERS[command](cfg)
    except BoundViolationError as exc:
        print(f"bound violation [{command}]: {exc}", file=sys.stderr)
        return 4
    except StripLabError as exc:
        print(f"numerical failure [{command}]: {exc}", file=sys.stderr)
        return 3

    report = {
        "experiment": cfg.kind,
        "seed": cfg.seed,
        "config_hash": config_hash(cfg.raw),
        "model": cfg.model.describe(),
        "results": results,
    }
    try:
        digest = write_report(cfg.output, report, series, lines)
    except OSError as exc:
        print(f"io failure [{command}]: {exc}", file=sys.stderr)
        return 3
    if not args.quiet:
        for line in lines:
            print(line)
        print(f"report written to {cfg.output} (sha256 {digest[:12]})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
