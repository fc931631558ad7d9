"""Command-line entry point: ground-state, constants, classify, verify, spectrum, evolve, sweep.

Exit codes: 0 success, 1 a verification check failed, 2 solver failure,
violated hypotheses or a bad configuration, 3 the output directory is not
writable.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import boundstate as bs
from . import criteria as cr
from . import dynamics as dyn
from . import radial as rd
from .lattice import NoConvergence, TrigFamily, positivity_audit
from .persist import (ConfigError, OutputDir, check_lambdas, load_config, load_lattice, merge,
                      output_root, parse_grid, table)

EXIT_OK, EXIT_VERIFY, EXIT_FAIL, EXIT_WRITE = 0, 1, 2, 3
SUITES = ("appendix-a", "appendix-b", "lemma21", "spectrum", "d2lambda", "dynamics")
SOLVER_ERRORS = (rd.ShootingError, rd.SectorError, bs.NewtonFailure, NoConvergence,
                 np.linalg.LinAlgError)


def _floats(text):
    return [float(x) for x in text.split(",")] if text else None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spikestab", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override its fields")
    common.add_argument("--out", help="output directory (default $SPIKESTAB_OUT or ./spikestab_out)")
    common.add_argument("--seed", type=int, help="random seed")
    lattice = argparse.ArgumentParser(add_help=False)
    lattice.add_argument("--lattice", help="lattice JSON path, case:NAME or line:NAME")
    lattice.add_argument("--lam", type=_floats, help="lambda value(s), comma separated")
    lattice.add_argument("--x0", type=_floats, help="seed point for the critical-point search")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ground-state", parents=[common], help="ground state, sectors, moments")
    p.add_argument("-N", type=int, dest="N")
    p.add_argument("--tol", type=float)

    p = sub.add_parser("constants", parents=[common], help="dimension constants C_N1..3")
    p.add_argument("-N", type=int, dest="N", help="dimension (default: 1, 2 and 3)")
    p.add_argument("--refine", action="store_const", const=True,
                   help="also report the change under radial grid halving")

    sub.add_parser("classify", parents=[common, lattice], help="stability verdict per lambda")

    p = sub.add_parser("sweep", parents=[common, lattice], help="verdicts over a lambda grid")
    p.add_argument("--lam-grid", dest="lam_grid", help="start:stop:count")

    p = sub.add_parser("spectrum", parents=[common, lattice], help="top eigenvalues of L_h")
    p.add_argument("--h", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--nodes", type=int, help="grid nodes per axis")

    p = sub.add_parser("evolve", parents=[common, lattice], help="perturbed split-step probes")
    p.add_argument("--h", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--periods", type=float)
    p.add_argument("--seeds", type=lambda s: [int(x) for x in s.split(",")])
    p.add_argument("--nodes", type=int)
    p.add_argument("--safety", type=float,
                   help="phase increment per step (default 0.025 for N=1, 0.1 for N=2)")

    p = sub.add_parser("verify", parents=[common, lattice], help="run a verification suite")
    p.add_argument("suite", choices=SUITES)
    p.add_argument("-N", type=int, dest="N")
    p.add_argument("--h", type=_floats, help="h value or ladder, comma separated")
    p.add_argument("--eps", type=float)
    p.add_argument("--periods", type=float)
    p.add_argument("--seeds", type=lambda s: [int(x) for x in s.split(",")])
    p.add_argument("--nodes", type=int)
    return ap


DEFAULTS = {
    "ground-state": {"N": 1, "tol": 1e-15},
    "constants": {"refine": False},
    "classify": {"lam": [1.0]},
    "sweep": {"lam_grid": "0.5:2:4"},
    "spectrum": {"lam": [1.0], "h": 0.1},
    "evolve": {"lam": [1.0], "h": 0.1, "eps": 1e-3, "periods": 50.0, "seeds": [0]},
    "verify": {"lam": [1.0]},
}


def resolve(args) -> dict:
    cli = {k: v for k, v in vars(args).items() if k not in ("config",)}
    file_cfg = {}
    base = None
    if args.config:
        file_cfg = load_config(args.config)
        base = Path(args.config).resolve().parent
        if file_cfg.get("command", args.command) != args.command:
            raise ConfigError(f"config is for command {file_cfg['command']!r}")
    cfg = merge(DEFAULTS.get(args.command, {}), merge(file_cfg, cli))
    cfg["command"] = args.command
    if cfg.get("seed") is None:
        cfg["seed"] = 0
    if "lam" in cfg:
        cfg["lam"] = check_lambdas(cfg["lam"])
    if isinstance(cfg.get("lattice"), str) and base is not None and not cfg["lattice"].startswith(
            ("case:", "line:")):
        cfg["lattice"] = str((base / cfg["lattice"]).resolve())
    cfg["out"] = str(output_root(cfg.get("out")))
    return cfg


def _lattice(cfg, default=None):
    ref = cfg.get("lattice") or default
    if ref is None:
        raise ConfigError("a --lattice is required for this command")
    return load_lattice(ref)


# ------------------------------------------------------------ commands

def cmd_ground_state(cfg, out: OutputDir) -> int:
    N = int(cfg["N"])
    if N not in rd.SUPPORTED_DIMS:
        raise ConfigError(f"N must be one of {rd.SUPPORTED_DIMS}")
    gs = rd.solve_ground_state(N, tol=float(cfg["tol"]))
    solves = rd.sector_set(gs)
    mt = rd.compute_moments(gs, solves)
    r = gs.grid.nodes
    out.add_csv(f"profile_N{N}.csv", ["r", "w", "dw"], zip(r, gs.w, gs.w_prime))
    summary = {
        "N": N, "p": gs.p, "w0": gs.w0, "decay_rate": gs.decay_rate,
        "pohozaev_ratio": rd.pohozaev_ratio(gs), "pohozaev_target": N / (N + 2),
        "ode_residual": rd.ode_residual(gs), "w_min": float(np.min(gs.w)),
        "moments": mt.values, "moment_errors": mt.errors,
        "positive_moments": {k: mt.values[k] > 0 for k in
                             ("M_w2_r2", "M_w2_r4", "M_wp1_r0", "M_wp1_r2", "M_wp1_r4")},
        "sector_residuals": {k: s.residual_norm for k, s in solves.items()},
    }
    if N == 1:
        exact = 3 ** 0.25 / np.sqrt(np.cosh(2 * r))
        summary["closed_form_max_error"] = float(np.max(np.abs(gs.w - exact)))
    out.add_json(f"ground_state_N{N}.json", summary)
    print(f"N={N} w(0)={gs.w0:.15g} pohozaev={summary['pohozaev_ratio']:.12g}")
    return EXIT_OK


def cmd_constants(cfg, out: OutputDir) -> int:
    dims = [int(cfg["N"])] if cfg.get("N") else list(rd.SUPPORTED_DIMS)
    rows, payload = [], {}
    for N in dims:
        c = cr.reference_constants(N)
        entry = {"C1": c.C1, "C2": c.C2, "C3": c.C3, "moments": c.sources}
        if cfg.get("refine"):
            entry["refinement"] = cr.constants_refinement(N)
        payload[f"N{N}"] = entry
        rows.append((N, c.C1, c.C2, c.C3))
    text = table(rows, ["N", "C1", "C2", "C3"])
    out.add_json("constants.json", payload)
    out.add_text("constants.txt", text)
    print(text, end="")
    return EXIT_OK


def _verdict_payload(lam, v):
    return {"lambda": lam, "theorem": v.theorem, "n_Lh": v.n_Lh, "p_dpp": v.p_dpp,
            "verdict": v.verdict, "diagnostics": v.diagnostics}


def cmd_classify(cfg, out: OutputDir) -> int:
    spec = _lattice(cfg)
    results, lines = [], []
    for lam in cfg["lam"]:
        v = cr.classify(spec, lam, cfg.get("x0"))
        results.append(_verdict_payload(lam, v))
        lines.append(f"lambda={lam:<8g} {v.row()}")
    audit = positivity_audit(spec) if isinstance(spec, TrigFamily) else None
    out.add_json("classify.json", {"lattice": spec.to_dict(), "results": results,
                                   "positivity_audit": audit})
    out.add_text("classify.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    violated = any(r["verdict"] == cr.VIOLATED for r in results)
    return EXIT_FAIL if violated else EXIT_OK


def cmd_sweep(cfg, out: OutputDir) -> int:
    spec = _lattice(cfg)
    lams = check_lambdas(parse_grid(cfg["lam_grid"]))
    res = cr.sweep(spec, lams, cfg.get("x0"))
    rows = [(lam, v.theorem, v.n_Lh, v.p_dpp, v.verdict) for lam, v in res]
    out.add_csv("sweep.csv", ["lambda", "theorem", "n_Lh", "p_dpp", "verdict"], rows)
    out.add_json("sweep.json", {"lattice": spec.to_dict(),
                                "results": [_verdict_payload(lam, v) for lam, v in res]})
    text = table(rows, ["lambda", "theorem", "n_Lh", "p_dpp", "verdict"])
    out.add_text("sweep.txt", text)
    print(text, end="")
    return EXIT_OK


def _spectrum_report(spec, lam, h, count=None, nodes=None):
    st = bs.solve_spike(spec, lam, h, n=nodes)
    rep = bs.spectrum_Lh(st, spec, count)
    return st, rep


def cmd_spectrum(cfg, out: OutputDir) -> int:
    spec = _lattice(cfg)
    lam = cfg["lam"][0]
    st, rep = _spectrum_report(spec, lam, float(cfg["h"]), cfg.get("count"), cfg.get("nodes"))
    out.add_json("spectrum.json", {"lattice": spec.to_dict(), "lambda": lam,
                                   "x0": st.x0, "x_h": st.x_h, "report": rep})
    out.add_csv("spectrum.csv", ["index", "eigenvalue"], enumerate(rep.eigenvalues))
    out.add_field("bound_state", st.u, {"period": st.box.period, "nodes_per_axis": st.box.n,
                                        "N": st.N, "h": st.h, "lambda": lam,
                                        "residual": st.residual_norm})
    print(f"eigenvalues: {np.array2string(rep.eigenvalues, precision=6)}")
    print(f"rescaled small: {rep.rescaled_small}  predicted: {rep.predicted}")
    return EXIT_OK


def cmd_evolve(cfg, out: OutputDir) -> int:
    spec = _lattice(cfg)
    lam, h = cfg["lam"][0], float(cfg["h"])
    seeds = list(cfg["seeds"])
    n = cfg.get("nodes")
    state = bs.solve_spike(spec, lam, h, n=n or bs.default_nodes(h, per_h=6.0 if spec.N == 1
                                                                 else 4.0))
    dt = dyn.default_dt(state, cfg.get("safety"))
    res = dyn.probe_ensemble(spec, lam, h, float(cfg["eps"]), float(cfg["periods"]), seeds,
                             dt=dt, state=state)
    summary = []
    for r in res:
        tr = r.trace
        rows = np.column_stack([tr.times, tr.distance, r.twin_distance, tr.mass, tr.energy])
        out.add_csv(f"trace_seed{r.seed}.csv",
                    ["time", "orbit_distance", "twin_distance", "mass", "energy"], rows)
        summary.append({"seed": r.seed, "growth_factor": r.growth_factor,
                        "orbit_growth_factor": r.orbit_growth_factor, "label": r.label,
                        "collapsed": tr.collapsed, "mass_drift_rate": tr.mass_drift_rate,
                        "energy_drift": tr.energy_drift, "steps": tr.steps})
        print(f"seed={r.seed} growth={r.growth_factor:.4g} label={r.label}")
    out.add_json("evolve.json", {"lattice": spec.to_dict(), "lambda": lam, "h": h,
                                 "dt": res[0].dt, "T": res[0].T, "grid_nodes": state.box.n,
                                 "probes": summary})
    return EXIT_OK


# ------------------------------------------------------------ verify

def _check(name, value, tol, ok=None):
    ok = bool(value <= tol) if ok is None else bool(ok)
    return {"check": name, "value": value, "tolerance": tol, "pass": ok}


def verify_reduction_identities(cfg):
    checks = []
    for N in ([int(cfg["N"])] if cfg.get("N") else [2, 3]):
        r = rd.verify_reduction_identities(N)
        for i, mis in enumerate(r["relative_mismatch"], start=1):
            checks.append(_check(f"N={N} identity {i}", mis, 1e-4))
    return checks, {}


def translation_form_ladder(cfg):
    spec = _lattice(cfg) if cfg.get("lattice") else TrigFamily.make(1, c2=-0.3)
    hs = cfg.get("h") or [0.2, 0.14, 0.1]
    r = bs.translation_form_ladder(spec, cfg["lam"][0], hs)
    checks = [_check("mismatch decreases along the ladder", 0.0, 0.0, r["monotone"]),
              _check("final mismatch", r["mismatch"][-1], 0.1)]
    return checks, r


def balance_identity(cfg):
    spec = _lattice(cfg) if cfg.get("lattice") else TrigFamily.make(
        1, a0=1, a1=0.2, c1=0.2, a2=1, c2=0.5)
    h = (cfg.get("h") or [0.1])[0]
    st = bs.solve_spike(spec, cfg["lam"][0], h, n=cfg.get("nodes"))
    coarse = bs.solve_spike(spec, cfg["lam"][0], h, n=st.box.n // 2)
    r_f = bs.balance_identity(st, spec)
    r_c = bs.balance_identity(coarse, spec)
    floor = 1e-12 * max(r_f["scale"], 1e-300)
    estimate = abs(r_c["norm"] - r_f["norm"]) + floor
    checks = [_check("residual within 10x grid-error estimate", r_f["norm"], 10 * estimate),
              _check("refinement drops 4x or reaches the rounding floor",
                     r_f["norm"], max(r_c["norm"] / 4, 10 * floor))]
    return checks, {"fine": r_f, "coarse": r_c, "grid_error_estimate": estimate}


def verify_spectrum(cfg):
    spec = _lattice(cfg) if cfg.get("lattice") else TrigFamily.make(int(cfg.get("N") or 1))
    h = (cfg.get("h") or [0.1])[0]
    st, rep = _spectrum_report(spec, cfg["lam"][0], h, nodes=cfg.get("nodes"))
    N = spec.N
    checks = [_check("one eigenvalue above mu1/2", rep.n_above_half_mu1, 1,
                     rep.n_above_half_mu1 == 1),
              _check("N eigenvalues in the small window", rep.n_in_window, N,
                     rep.n_in_window == N)]
    pred = rep.predicted
    for j in range(min(N, len(rep.rescaled_small))):
        if abs(pred[j]) < 1e-12:
            checks.append(_check(f"kernel eigenvalue {j}", abs(rep.rescaled_small[j] * h ** 2),
                                 1e-6))
        else:
            checks.append(_check(f"rescaled eigenvalue {j} relative error",
                                 float(rep.relative_errors[j]), 0.1))
    return checks, {"report": rep}


def verify_d2lambda(cfg):
    spec = _lattice(cfg) if cfg.get("lattice") else TrigFamily.make(1, a0=0.5, c0=1.3)
    lam = cfg["lam"][0]
    h = (cfg.get("h") or [0.05])[0]
    est = bs.d2_lambda_fd(spec, lam, h, n=cfg.get("nodes"))
    info = {"estimate": est}
    if _is_constant(spec):
        return [_check("|d''| below differencing noise", abs(est.value), est.noise)], info
    v = cr.classify(spec, lam)
    pred = cr.leading_dpp(v, h, spec.N)
    info.update(verdict=v.verdict, theorem=v.theorem, predicted=pred)
    if pred is None:
        return [_check("theorem prediction available", 1.0, 0.0, False)], info
    ok = np.sign(pred) == np.sign(est.value) and abs(est.value) > est.noise
    return [_check("sign of d'' matches the theorem", est.value, pred, ok)], info


def _is_constant(spec):
    if isinstance(spec, TrigFamily):
        return not any(spec.a[1:]) and not any(spec.b[1:]) and not any(spec.c[1:]) \
            and not any(spec.d[1:])
    return False


def verify_dynamics(cfg):
    spec = _lattice(cfg) if cfg.get("lattice") else TrigFamily.make(1, a0=1, a2=1, c2=-0.01)
    lam = cfg["lam"][0]
    h = (cfg.get("h") or [0.1])[0]
    seeds = cfg.get("seeds") or [0, 1, 2]
    res = dyn.probe_ensemble(spec, lam, h, cfg.get("eps") or 1e-3, cfg.get("periods") or 50.0,
                             seeds, n=cfg.get("nodes"))
    v = cr.classify(spec, lam)
    expect = {"stable": "bounded", "unstable": "grows"}.get(v.verdict)
    checks = []
    for r in res:
        checks.append(_check(f"seed {r.seed} mass drift per unit time",
                             r.trace.mass_drift_rate, 1e-10))
        if expect is not None:
            checks.append(_check(f"seed {r.seed} growth agrees with '{v.verdict}'",
                                 r.growth_factor, dyn.STABLE_BELOW if expect == "bounded"
                                 else dyn.UNSTABLE_ABOVE, r.label == expect))
    info = {"verdict": v.verdict, "growth_factors": [r.growth_factor for r in res],
            "labels": [r.label for r in res]}
    return checks, info


VERIFIERS = {
    "appendix-a": translation_form_ladder, "appendix-b": verify_reduction_identities,
    "lemma21": balance_identity, "spectrum": verify_spectrum,
    "d2lambda": verify_d2lambda, "dynamics": verify_dynamics,
}


def cmd_verify(cfg, out: OutputDir) -> int:
    suite = cfg["suite"]
    checks, info = VERIFIERS[suite](cfg)
    ok = all(c["pass"] for c in checks)
    out.add_json(f"verify_{suite}.json", {"suite": suite, "pass": ok, "checks": checks,
                                          "details": info})
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['check']}: value={c['value']} "
              f"tolerance={c['tolerance']}")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "ground-state": cmd_ground_state, "constants": cmd_constants, "classify": cmd_classify,
    "sweep": cmd_sweep, "spectrum": cmd_spectrum, "evolve": cmd_evolve, "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        out = OutputDir(cfg["out"])
    except (ConfigError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except PermissionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_WRITE
    try:
        code = COMMANDS[args.command](cfg, out)
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ValueError, KeyError, TypeError) as exc:
        # bad lattice data or parameters surface as plain value errors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out.add_json("config.json", cfg, with_metadata=False)
    try:
        out.commit()
    except PermissionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_WRITE
    return code


if __name__ == "__main__":
    sys.exit(main())
