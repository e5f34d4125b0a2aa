"""Command line front end: scenario files in, summary.json, curves and plots out.

Exit codes: 0 every declared check passed, 1 some check failed, 2 the input
could not be read, 3 a numerical stage broke down.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .decay import check_sharp, choose_upsilon
from .rk45 import IntegrationFailure
from .scenario import ScenarioError, bundled_scenarios, counterexample_profile, load_scenario
from .field import NormSpec, slice_norms
from .hamiltonian import certify_envelopes
from .solver import (
    NonIntegrableError, SolverFailure, certify_decay, companion_envelope, solve_torus,
    solve_torus_field, torus_field_model,
)
from .verify import (
    asymptotic_defect, backward_roundtrip, conjugacy_curve, counterexample_divergence,
    flow_lipschitz, gronwall_bound, lagrangian_curve, write_curve, write_summary,
)

log = logging.getLogger("asymkam")

PASS, FAIL, INPUT, NUMERIC = 0, 1, 2, 3
NO_TORUS = "no asymptotic torus: divergent drift"


class Run:
    """Collects numbers, curves and check outcomes for one scenario."""

    def __init__(self, scn, out):
        self.scn = scn
        self.out = Path(out)
        self.summary = {"scenario": scn.name, "kind": scn.kind, "seed": scn.seed,
                        "solver": _config_dict(scn.solver), "checks": []}
        self.curves = {}
        self.H = None
        self.fam = None
        self.trace = None

    def curve(self, name, t, values, header, title, logy=True):
        self.curves[name] = (np.asarray(t), np.asarray(values), header, title, logy)

    def check(self, name, value, threshold, passed, **extra):
        rec = {"check": name, "value": value, "threshold": threshold, "passed": bool(passed)}
        rec.update(extra)
        self.summary["checks"].append(rec)
        log.info("%s %s: %s (threshold %s)", "PASS" if passed else "FAIL", name, value, threshold)

    @property
    def passed(self):
        return all(c["passed"] for c in self.summary["checks"])

    def write(self):
        self.summary["passed"] = self.passed
        for name, (t, vals, header, _, _) in self.curves.items():
            write_curve(self.out / "curves" / f"{name}.csv", t, vals, header)
        write_summary(self.out / "summary.json", self.summary)
        plot_curves(self.out)


def _config_dict(cfg):
    return {k: v for k, v in vars(cfg).items()}


def phases(count, dim, seed):
    """``count`` starting phases: an evenly spread set under a seeded random shift."""
    rng = np.random.default_rng(seed)
    base = (np.arange(count)[:, None] + rng.random(dim)) / count
    for ax in range(1, dim):
        base[:, ax] = base[rng.permutation(count), ax]
    return base % 1.0


# stages


def stage_decay(run):
    scn = run.scn
    if scn.kind == "hamiltonian":
        a_env, b_env, up = scn.model.a_env, scn.model.b_env, scn.model.upsilon
    else:
        b_env = scn.P.envelope
        if not b_env.integrable:
            run.summary["decay"] = {"integrable": False, "holds": False, "profile": b_env.to_dict()}
            return False
        a_env, up = companion_envelope(b_env), float(scn.P.nodes[0])
    rep = check_sharp(a_env, b_env, up)
    rec = {"integrable": True, "holds": rep.holds, "lambda_min": rep.lambda_min,
           "worst_t": rep.worst_t, "a_envelope": a_env.to_dict(), "b_envelope": b_env.to_dict()}
    if rep.holds:
        rec["upsilon_for_budget"] = choose_upsilon(a_env, b_env, rep.lambda_min,
                                                   scn.solver.budget, rep.upsilon_used)
    run.summary["decay"] = rec
    return rep.holds


def stage_solve(run):
    scn = run.scn
    H = scn.model if scn.kind == "hamiltonian" else torus_field_model(scn.omega, scn.P)
    run.H = H
    fam, trace = solve_torus(H, scn.solver)
    run.fam, run.trace = fam, trace
    cert = certify_decay(fam)
    weak = certify_decay(fam, spec=scn.solver.report_norm())
    run.summary["solve"] = {
        "status": trace.status,
        "iterations": trace.iterations,
        "residual": trace.residual,
        "ratios": trace.ratios,
        "escalations": trace.escalations,
        "upsilon_prime": fam.upsilon_prime,
        "Lambda": fam.Lambda,
        "Upsilon": H.Upsilon,
        "t_max": float(fam.nodes[-1]),
        "min_jacobian_det": fam.min_jacobian_det(),
        "sup_u": fam.sup_u(),
        "sup_v": float(slice_norms(fam.v.coeffs, fam.dim, NormSpec.holder(0.0)).max()),
        "C_u": cert.C_u, "C_v": cert.C_v,
        "trend_u": cert.trend_u, "trend_v": cert.trend_v,
        "reported_norm": {"C_u": weak.C_u, "C_v": weak.C_v},
        "trace": trace.to_dict(),
    }
    if scn.solver.certify:
        # measured |d_q a| and |b| in the weighted norms; envelopes were scaled up by these when > 1
        _, (ca, cb) = certify_envelopes(H, scn.solver.sigma)
        run.summary["solve"]["envelope_norms"] = {"a": ca, "b": cb}
    steps = [r.step for r in trace.records]
    res = [max(r.f1, r.f2) for r in trace.records]
    run.curve("residual", steps, res, ("step", "residual"), "weighted residual per step")
    ratio_steps = [r.step for r in trace.records if np.isfinite(r.ratio)]
    ratios = [r.ratio for r in trace.records if np.isfinite(r.ratio)]
    if ratios:
        run.curve("contraction", ratio_steps, ratios, ("step", "ratio"), "contraction ratio")
    t = fam.nodes
    ru = slice_norms(fam.u.coeffs, fam.dim, fam.norm) / fam.b_env.tail(t)
    rv = slice_norms(fam.v.coeffs, fam.dim, fam.norm) / fam.a_env.tail(t)
    run.curve("decay", t, np.stack([ru, rv], axis=1), ("t", "u_over_bbar", "v_over_abar"),
              "slice norms over envelope tails", logy=False)
    return fam


# checks


def _phase_count(spec, default=8):
    return int(spec.get("phases", default))


def check_residual(run, spec):
    thr = float(spec.get("max", run.scn.solver.tol))
    r = run.trace.residual
    run.check("residual", r, thr, r < thr)


def check_iterations(run, spec):
    thr = int(spec.get("max", 15))
    run.check("iterations", run.trace.iterations, thr, run.trace.iterations <= thr)


def check_contraction(run, spec):
    thr = float(spec.get("max", 0.55))
    k = int(spec.get("trailing", 3))
    tail = run.trace.ratios[-k:]
    worst = max(tail) if tail else 0.0
    run.check("contraction", worst, thr, worst <= thr, trailing=k)


def check_decay(run, spec):
    s = run.summary["solve"]
    thr = float(spec.get("max_trend", 1.5))
    finite = np.isfinite(s["C_u"]) and np.isfinite(s["C_v"])
    worst = max(s["trend_u"], s["trend_v"])
    run.check("decay", worst, thr, finite and worst <= thr, C_u=s["C_u"], C_v=s["C_v"])


def check_zero_torus(run, spec):
    s = run.summary["solve"]
    size = max(s["sup_u"], s["sup_v"])
    ok = size == 0.0 and s["iterations"] == 0 and s["residual"] == 0.0
    run.check("zero_torus", size, 0.0, ok, iterations=s["iterations"])


def check_conjugacy(run, spec):
    fam, H = run.fam, run.H
    tol = float(spec.get("tol", 1e-10))
    horizon = float(spec.get("horizon", 20.0))
    thr = float(spec.get("max", 1e-4))
    q = phases(_phase_count(spec), fam.dim, run.scn.seed)
    t0 = fam.upsilon_prime
    times, d, Q, P = conjugacy_curve(H, fam, q, t0, t0 + horizon, tol)
    worst = float(d.max())
    L = flow_lipschitz(H, times[::10], Q[::10], P[::10])
    bound = float(gronwall_bound(run.trace.residual, L, horizon, tol))
    per_phase = d.max(axis=0)
    floor = 100 * tol
    spread = float(max(per_phase.max(), floor) / max(per_phase.min(), floor))
    run.curve("conjugacy", times, d.max(axis=1), ("t", "defect"), "conjugacy defect")
    run.check("conjugacy", worst, thr, worst <= thr, horizon=horizon, lipschitz=L,
              gronwall_bound=bound, phase_spread=spread)
    if "spread" in spec:
        run.check("conjugacy_phase_spread", spread, float(spec["spread"]),
                  spread <= float(spec["spread"]))


def check_asymptotic(run, spec):
    fam, H = run.fam, run.H
    tol = float(spec.get("tol", 1e-10))
    horizon = float(spec.get("horizon", 10.0))
    thr = float(spec.get("max_ratio", 1e3))
    q = phases(_phase_count(spec), fam.dim, run.scn.seed)
    times, d, ratio = asymptotic_defect(H, fam, q, fam.upsilon_prime, horizon, tol)
    run.curve("asymptotic", times, d, ("t", "distance"), "distance to the rigid orbit")
    run.check("asymptotic", ratio, thr, np.isfinite(ratio) and ratio <= thr, horizon=horizon)


def check_lagrangian(run, spec):
    fam = run.fam
    L = lagrangian_curve(fam)
    t = fam.nodes
    w = fam.b_env.tail(t) + fam.a_env.tail(t)
    ratio = float(np.max(L / w))
    thr = float(spec.get("max_ratio", 1.0))
    run.curve("lagrangian", t, L, ("t", "defect"), "Lagrangian defect")
    run.check("lagrangian", ratio, thr, ratio <= thr)
    if "min_slope" in spec:
        m = L > 0
        slope = float(np.polyfit(np.log(w[m]), np.log(L[m]), 1)[0]) if m.sum() > 2 else float("inf")
        thr = float(spec["min_slope"])
        run.check("lagrangian_slope", slope, thr, slope >= thr)


def check_backward(run, spec):
    fam, H = run.fam, run.H
    tol = float(spec.get("tol", 1e-10))
    factor = float(spec.get("factor", 100.0))
    t = fam.upsilon_prime - float(spec.get("offset", 5.0))
    if H.a.nodes[0] > t or H.b.nodes[0] > t:
        raise ScenarioError(f"backward check needs model fields down to t = {t}")
    q = phases(_phase_count(spec), fam.dim, run.scn.seed)
    err = backward_roundtrip(H, fam, t, q, tol)
    run.check("backward", err, factor * tol, err <= factor * tol, t=t)


def check_counterexample(run, spec):
    scn = run.scn
    rec = spec.get("profile")
    if rec is not None:
        profile = counterexample_profile(rec)
        omega = np.atleast_1d(spec.get("omega", 0.5))
    elif scn.kind == "torus_field":
        profile, omega = scn.P.envelope, scn.omega
    else:
        raise ScenarioError("counterexample check needs a 'profile' or a torus_field scenario")
    horizon = float(spec.get("horizon", np.expm1(10.0)))
    rep = counterexample_divergence(omega, profile, horizon=horizon)
    # the lift grows like omega t, so agreement is measured relative to its size
    lift = np.max(np.abs(omega)) * (rep.times[-1] - rep.times[0]) + abs(rep.offset[-1])
    match = float(np.max(np.abs(rep.offset_flow - rep.offset)) / (1.0 + lift))
    thr = float(spec.get("match", 1e-9))
    run.curve("counterexample", rep.times, np.stack([rep.offset, rep.offset_flow], axis=1),
              ("t", "offset", "offset_flow"), "lift offset", logy=False)
    run.check("counterexample_match", match, thr, match <= thr)
    run.check("counterexample_diverges", rep.doubling_ratio, 0.9, rep.diverges,
              final_offset=float(rep.offset[-1]))
    if rep.diverges:
        run.summary["verdict"] = NO_TORUS


CHECKS = {
    "residual": check_residual,
    "iterations": check_iterations,
    "contraction": check_contraction,
    "decay": check_decay,
    "zero_torus": check_zero_torus,
    "conjugacy": check_conjugacy,
    "asymptotic": check_asymptotic,
    "lagrangian": check_lagrangian,
    "backward": check_backward,
    "counterexample": check_counterexample,
}

SOLVE_CHECKS = ("residual", "iterations", "contraction", "decay", "zero_torus")


def _plan(scn):
    plan = scn.verify
    if isinstance(plan, dict):
        plan = [dict(spec, check=name) for name, spec in plan.items()]
    for spec in plan:
        if spec.get("check") not in CHECKS:
            raise ScenarioError(f"unknown check {spec.get('check')!r}; known: {', '.join(CHECKS)}")
    return plan


def execute(scn, out, stages):
    """Run the requested stages; returns ``(Run, exit_code)``."""
    run = Run(scn, out)
    plan = _plan(scn)
    holds = stage_decay(run)
    if stages == {"decay"}:
        run.check("compatibility", run.summary["decay"].get("lambda_min"), None, holds)
        return run, PASS if holds else FAIL
    if not run.summary["decay"]["integrable"]:
        run.summary["solve"] = {"status": "rejected", "reason": "non-integrable perturbation"}
        try:
            solve_torus_field(scn.omega, scn.P, scn.solver)
        except NonIntegrableError as exc:
            run.check("rejects_non_integrable", True, None, True, message=str(exc))
        wanted = [s for s in plan if s["check"] == "counterexample"]
        if "verify" in stages and wanted:
            for spec in wanted:
                check_counterexample(run, spec)
        elif "verify" in stages:
            run.check("torus_exists", False, None, False)
        return run, PASS if run.passed else FAIL
    if not holds:
        raise ScenarioError("declared envelopes fail the compatibility test")
    stage_solve(run)
    for spec in plan:
        name = spec["check"]
        if name in SOLVE_CHECKS or "verify" in stages:
            CHECKS[name](run, spec)
    if "solve" in stages and not any(c["check"] == "residual" for c in run.summary["checks"]):
        check_residual(run, {})
    return run, PASS if run.passed else FAIL


def counterexample_only(scn, out):
    run = Run(scn, out)
    plan = [s for s in _plan(scn) if s["check"] == "counterexample"] or [{}]
    stage_decay(run)
    if scn.kind == "torus_field":
        try:
            solve_torus_field(scn.omega, scn.P, scn.solver)
            run.check("rejects_non_integrable", False, None, False)
        except NonIntegrableError as exc:
            run.check("rejects_non_integrable", True, None, True, message=str(exc))
    for spec in plan:
        check_counterexample(run, spec)
    return run, PASS if run.passed else FAIL


# plots


def plot_curves(out):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "asymkam"
    out = Path(out)
    (out / "plots").mkdir(parents=True, exist_ok=True)
    meta = out / "summary.json"
    name = json.loads(meta.read_text())["scenario"] if meta.exists() else out.name
    for path in sorted((out / "curves").glob("*.csv")):
        with path.open() as fh:
            rows = list(csv.reader(fh))
        header, data = rows[0], np.array(rows[1:], dtype=float).reshape(len(rows) - 1, -1)
        fig, ax = plt.subplots(figsize=(6, 4))
        positive = data.size and np.all(data[:, 1:] > 0)
        for j, label in enumerate(header[1:], start=1):
            (ax.semilogy if positive and path.stem != "contraction" else ax.plot)(
                data[:, 0], data[:, j], label=label, marker="." if len(data) < 40 else None)
        ax.set_xlabel(header[0])
        ax.set_title(f"{name}: {path.stem}")
        if len(header) > 2:
            ax.legend()
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(out / "plots" / f"{path.stem}.svg", metadata={"Date": None})
        plt.close(fig)


# entry point


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, help="solver residual tolerance")
    common.add_argument("--band", type=int, help="Fourier band K")
    common.add_argument("--nodes", type=int, help="number of time nodes in the solver grid")
    common.add_argument("--out", help="artifact directory")
    common.add_argument("--seed", type=int, help="seed for starting phases")
    common.add_argument("--json", action="store_true", help="print summary.json to stdout")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="asymkam", parents=[common],
                                description="Asymptotic KAM tori for decaying perturbations.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in [
        ("check-decay", "test the envelope compatibility condition"),
        ("solve", "compute the torus and certify its decay"),
        ("verify", "solve, then run the scenario's verification plan"),
        ("run", "same as verify"),
        ("counterexample", "lift offset for a non-integrable profile"),
    ]:
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("scenario", help=f"scenario file or bundled name ({', '.join(bundled_scenarios())})")
    r = sub.add_parser("report", parents=[common], help="re-plot and print an artifact directory")
    r.add_argument("directory")
    return p


def _print(summary, as_json):
    if as_json:
        print(json.dumps(summary, indent=2, sort_keys=True, default=float))
        return
    print(f"scenario {summary['scenario']}")
    solve = summary.get("solve", {})
    for key in ("status", "iterations", "residual", "C_u", "C_v", "upsilon_prime"):
        if key in solve:
            print(f"  {key:14s} {solve[key]}")
    if "verdict" in summary:
        print(f"  verdict        {summary['verdict']}")
    for c in summary["checks"]:
        print(f"  {'PASS' if c['passed'] else 'FAIL'} {c['check']}: {c['value']} (threshold {c['threshold']})")


def report(directory, as_json):
    d = Path(directory)
    path = d / "summary.json"
    if not path.exists():
        raise ScenarioError(f"{path} not found")
    summary = json.loads(path.read_text())
    plot_curves(d)
    _print(summary, as_json)
    return PASS if summary.get("passed") else FAIL


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "report":
            return report(args.directory, args.json)
        scn = load_scenario(args.scenario, tol=args.tol, band=args.band, nodes=args.nodes)
        if args.seed is not None:
            scn.seed = args.seed
        out = args.out or scn.output or str(Path("out") / scn.name)
        if args.command == "counterexample":
            run, code = counterexample_only(scn, out)
        else:
            stages = {"check-decay": {"decay"}, "solve": {"decay", "solve"}}.get(
                args.command, {"decay", "solve", "verify"})
            run, code = execute(scn, out, stages)
        run.write()
        _print(run.summary, args.json)
        return code
    except (ScenarioError, KeyError, TypeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return INPUT
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return INPUT
    except (SolverFailure, IntegrationFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERIC


if __name__ == "__main__":
    sys.exit(main())
