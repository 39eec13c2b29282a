"""Bench harness: run, sweep, certify and discretize scenarios from configs.

Exit codes: 0 pass, 1 acceptance-condition fail, 2 validation error,
3 integration failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

from . import discretize, propagate, scenario, spectra

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3

# plateau-vs-bound and ordering checks use strict inequality with this slack
STRICT_SLACK = 1e-9
# auto-horizon: window of this many decay times after the last disturbance
HORIZON_EFOLDS = 40.0
LEFT_ORDER_BRACKET = (0.8, 1.3)
MIDPOINT_ORDER_BRACKET = (1.7, 2.4)


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _with_suffix(name: str, suffix: str) -> str:
    stem, dot, ext = name.rpartition(".")
    if not dot:
        return name + suffix
    return f"{stem}{suffix}.{ext}"


def _apply_overrides(scn: scenario.Scenario, overrides: dict) -> None:
    if overrides.get("seed") is not None:
        scn.run.seed = overrides["seed"]
    if overrides.get("rtol") is not None:
        scn.run.rtol = overrides["rtol"]
    if overrides.get("atol") is not None:
        scn.run.atol = overrides["atol"]


def _certificate(scn: scenario.Scenario, base: spectra.SpectralCertificate | None
                 ) -> spectra.SpectralCertificate | None:
    """Certificate for this scenario, rescaling a precomputed base if given."""
    if scn.protocol is None:
        return None
    if base is not None:
        bound = (base.prefactor_K * base.noise_norm_upper
                 / (scn.gamma * base.abscissa_alpha)
                 if base.is_unique_density_steady else float("nan"))
        return dataclasses.replace(base, gamma=scn.gamma, bound_value=bound)
    return spectra.certify(scn.protocol, scn.noise.persistent, strict=False,
                           seed=spectra.DEFAULT_SEED + scn.run.seed)


def _effective_bound(scn: scenario.Scenario, cert: spectra.SpectralCertificate | None) -> float:
    """Asymptotic error bound including any declared uncertainty budget."""
    if cert is None or not cert.is_unique_density_steady:
        return float("nan")
    extra = scn.noise.uncertainty.bound if scn.noise.uncertainty is not None else 0.0
    return (cert.prefactor_K * (cert.noise_norm_upper + extra)
            / (scn.gamma * cert.abscissa_alpha))


def _auto_window(scn: scenario.Scenario, cert: spectra.SpectralCertificate | None) -> float:
    if isinstance(scn.run.t_end, (int, float)):
        return float(scn.run.t_end)
    if cert is None or not cert.is_unique_density_steady:
        raise scenario.ConfigError(
            "run.t_end", "auto horizon needs a certifiable protocol; set a number")
    last_event = max((t for t, _ in scn.noise.transient_events), default=0.0)
    return last_event + HORIZON_EFOLDS / (scn.gamma * cert.abscissa_alpha)


def _evaluate_conditions(conds: list[dict], traj: propagate.Trajectory,
                         plateau_value: float, bound_eff: float,
                         gamma: float) -> list[tuple[str, bool | None]]:
    """Evaluate embedded pass conditions; None marks a vacuous (skipped) check."""
    out = []
    for c in conds:
        typ = c.get("type")
        if typ == "d_max_before":
            mask = traj.times < float(c["time"])
            ok = bool(mask.any()) and float(traj.errors[mask].max()) < float(c["max"])
        elif typ == "d_final":
            ok = float(traj.errors[-1]) < float(c["max"])
        elif typ == "d_max":
            ok = float(traj.errors.max()) < float(c["max"])
        elif typ == "plateau_below_bound":
            if gamma == 0:
                ok = None  # the bound scales as 1/gamma; vacuous without feedback
            else:
                ok = math.isfinite(bound_eff) and plateau_value <= bound_eff - STRICT_SLACK
        else:
            raise scenario.ConfigError("pass_conditions", f"unknown condition type {typ!r}")
        out.append((typ, ok))
    return out


def run_one(cfg: dict, out_dir: str, overrides: dict,
            gamma_override: float | None = None,
            horizon_override: float | None = None,
            cert_base: spectra.SpectralCertificate | None = None,
            suffix: str = "") -> dict:
    """Run a single scenario; writes CSV + report and returns a summary."""
    scn = scenario.build_scenario(cfg, gamma_override)
    _apply_overrides(scn, overrides)
    cert = _certificate(scn, cert_base)
    bound_eff = _effective_bound(scn, cert)
    window = horizon_override if horizon_override is not None else _auto_window(scn, cert)

    eq = propagate.MasterEquation(scn.plant_h, scn.d_c, feedback=scn.protocol,
                                  noise=scn.noise)
    traj, plateau_value = propagate.run_to_plateau(
        eq, scn.sigma0, scn.noise, scn.plant_h, scn.phi0,
        0.0, window, grid_points=scn.run.grid_points,
        tail_fraction=scn.run.tail_fraction,
        rtol=scn.run.rtol, atol=scn.run.atol)

    checks = _evaluate_conditions(scn.pass_conditions, traj, plateau_value,
                                  bound_eff, scn.gamma)
    passed = all(ok is not False for _, ok in checks)

    csv_path = os.path.join(out_dir, _with_suffix(scn.csv_name, suffix))
    report_path = os.path.join(out_dir, _with_suffix(scn.report_name, suffix))
    buf = io.StringIO()
    propagate.export_csv(traj, buf, include_probabilities=(scn.d_p == 4))
    _atomic_write(csv_path, buf.getvalue())

    lines = [] if cert is None else [cert.to_report()]
    lines.append(f"plateau: {plateau_value:.17g}\n"
                 f"bound_effective: {bound_eff:.17g}\n"
                 f"t_end: {traj.times[-1]:.17g}\n"
                 f"extensions: {traj.meta.get('extensions', 0)}\n"
                 f"steps: {traj.meta['steps']}\n"
                 f"rejected: {traj.meta['rejected']}\n"
                 f"nfev: {traj.meta['nfev']}\n"
                 f"max_trace_drift: {traj.meta['max_trace_drift']:.3e}\n"
                 f"min_eig: {traj.meta['min_eig_overall']:.3e}\n")
    for name, ok in checks:
        verdict = "skipped" if ok is None else ("pass" if ok else "fail")
        lines.append(f"check_{name}: {verdict}\n")
    lines.append(f"pass: {str(passed).lower()}\n")
    _atomic_write(report_path, "".join(lines))

    return {
        "gamma": scn.gamma, "plateau": plateau_value, "bound": bound_eff,
        "pass": passed, "checks": checks, "csv": csv_path, "report": report_path,
        "t_end": float(traj.times[-1]),
    }


def cmd_run(args) -> int:
    cfg = scenario.load_config(args.config)
    out_dir = _ensure_out(args)
    summary = run_one(cfg, out_dir, _overrides(args))
    print(f"plateau={summary['plateau']:.12g} bound={summary['bound']:.12g} "
          f"pass={str(summary['pass']).lower()}")
    return EXIT_PASS if summary["pass"] else EXIT_FAIL


def _sweep_item(packed):
    cfg, gamma, out_dir, overrides, horizon, cert_base = packed
    try:
        res = run_one(cfg, out_dir, overrides, gamma_override=gamma,
                      horizon_override=horizon, cert_base=cert_base,
                      suffix=f"_gamma{gamma:g}")
        return gamma, res, None
    except Exception as exc:  # a failed item must not abort the others
        return gamma, None, f"{type(exc).__name__}: {exc}"


def cmd_sweep(args) -> int:
    cfg = scenario.load_config(args.config)
    out_dir = _ensure_out(args)
    overrides = _overrides(args)
    if args.gamma:
        gammas = [float(g) for g in args.gamma.split(",") if g != ""]
    else:
        gammas = scenario.build_scenario(cfg).run.gamma_sweep
    if not gammas:
        print("sweep: no gamma values given (use --gamma or run.gamma_sweep)", file=sys.stderr)
        return EXIT_CONFIG
    if any(g < 0 for g in gammas):
        print("sweep: gamma values must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG

    positive = sorted(g for g in gammas if g > 0)
    cert_base = None
    windows: dict[float, float] = {}
    if positive:
        ref = scenario.build_scenario(cfg, positive[0])
        _apply_overrides(ref, overrides)
        cert_base = _certificate(ref, None)
        for g in positive:
            scn_g = scenario.build_scenario(cfg, g)
            if isinstance(scn_g.run.t_end, (int, float)):
                windows[g] = float(scn_g.run.t_end)
            elif cert_base.is_unique_density_steady:
                last_event = max((t for t, _ in scn_g.noise.transient_events), default=0.0)
                windows[g] = last_event + HORIZON_EFOLDS / (g * cert_base.abscissa_alpha)
            else:
                raise scenario.ConfigError("run.t_end", "auto horizon needs a certifiable protocol")
    if any(g == 0 for g in gammas):
        if windows:
            windows[0.0] = max(windows.values())
        else:
            t_end = scenario.build_scenario(cfg, 0.0).run.t_end
            if not isinstance(t_end, (int, float)):
                raise scenario.ConfigError(
                    "run.t_end", "a numeric horizon is required when feedback is off")
            windows[0.0] = float(t_end)

    items = [(cfg, g, out_dir, overrides, windows[g], cert_base if g > 0 else None)
             for g in gammas]
    workers = max(1, args.workers)
    if workers == 1 or len(items) == 1:
        results = [_sweep_item(it) for it in items]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
            results = list(pool.map(_sweep_item, items))

    by_gamma = {g: (res, err) for g, res, err in results}
    lines = []
    failed_items = []
    for g in gammas:
        res, err = by_gamma[g]
        if err is not None:
            lines.append(f"gamma: {g:g} error: {err}\n")
            failed_items.append(g)
        else:
            lines.append(f"gamma: {g:g} plateau: {res['plateau']:.17g} "
                         f"bound: {res['bound']:.17g} pass: {str(res['pass']).lower()}\n")

    verdicts = _sweep_verdicts(cfg, gammas, by_gamma)
    for name, ok in verdicts:
        lines.append(f"{name}: {'skipped' if ok is None else ('pass' if ok else 'fail')}\n")
    item_pass = all(err is None and res["pass"] for g, (res, err) in by_gamma.items())
    overall = item_pass and all(ok is not False for _, ok in verdicts)
    lines.append(f"overall: {'pass' if overall else 'fail'}\n")

    scn0 = scenario.build_scenario(cfg, gammas[0])
    _atomic_write(os.path.join(out_dir, _with_suffix(scn0.report_name, "_sweep")),
                  "".join(lines))
    sys.stdout.write("".join(lines))
    return EXIT_PASS if overall else EXIT_FAIL


def _sweep_verdicts(cfg: dict, gammas: list[float], by_gamma: dict
                    ) -> list[tuple[str, bool | None]]:
    """Cross-gain verdicts; None marks a verdict whose gains were not swept."""
    plateaus = {g: res["plateau"] for g, (res, err) in by_gamma.items() if err is None}
    verdicts = []
    conds = cfg.get("sweep_pass_conditions", [])
    positive = sorted(g for g in gammas if g > 0 and g in plateaus)
    for c in conds:
        typ = c.get("type")
        if typ == "plateaus_decreasing":
            ok = None if len(positive) < 2 else all(
                plateaus[b] < plateaus[a] - STRICT_SLACK
                for a, b in zip(positive, positive[1:]))
        elif typ == "gamma_zero_largest":
            if 0.0 not in plateaus or not positive:
                ok = None
            else:
                ok = all(plateaus[0.0] > plateaus[g] + STRICT_SLACK for g in positive)
        elif typ == "plateau_below_bound":
            ok = None if not positive else all(
                math.isfinite(by_gamma[g][0]["bound"])
                and plateaus[g] <= by_gamma[g][0]["bound"] - STRICT_SLACK
                for g in positive)
        elif typ == "plateau_ratio":
            hi, lo = float(c["gamma_hi"]), float(c["gamma_lo"])
            if hi not in plateaus or lo not in plateaus:
                ok = None
            else:
                ok = plateaus[hi] <= float(c["max_ratio"]) * plateaus[lo]
        else:
            raise scenario.ConfigError("sweep_pass_conditions", f"unknown condition type {typ!r}")
        verdicts.append((typ, ok))
    return verdicts


def cmd_certify(args) -> int:
    cfg = scenario.load_config(args.config)
    out_dir = _ensure_out(args)
    scn = scenario.build_scenario(cfg)
    _apply_overrides(scn, _overrides(args))
    if scn.protocol is None:
        print("certify: scenario has no feedback protocol", file=sys.stderr)
        return EXIT_CONFIG
    cert = spectra.certify(scn.protocol, scn.noise.persistent, strict=False,
                           seed=spectra.DEFAULT_SEED + scn.run.seed)
    _atomic_write(os.path.join(out_dir, scn.report_name), cert.to_report())
    sys.stdout.write(cert.to_report())
    ok = cert.is_unique_density_steady and cert.abscissa_alpha > 0
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_discretize(args) -> int:
    cfg = scenario.load_config(args.config)
    out_dir = _ensure_out(args)
    scn = scenario.build_scenario(cfg)
    _apply_overrides(scn, _overrides(args))
    if scn.protocol is None:
        print("discretize: scenario has no feedback protocol", file=sys.stderr)
        return EXIT_CONFIG
    cells = [int(c) for c in args.cells.split(",") if c != ""]
    if len(cells) < 2:
        print("discretize: need at least two cell counts", file=sys.stderr)
        return EXIT_CONFIG
    t_end = scn.run.t_end if isinstance(scn.run.t_end, (int, float)) else 2.0
    ok = True
    for rule, bracket in (("left", LEFT_ORDER_BRACKET), ("midpoint", MIDPOINT_ORDER_BRACKET)):
        rows = discretize.convergence_table(
            scn.protocol, scn.plant_h, scn.sigma0, (0.0, float(t_end)),
            scn.noise, cells, cell_rule=rule)
        stem = _with_suffix(scn.csv_name, f"_{rule}")
        buf = io.StringIO()
        discretize.export_table_csv(rows, buf)
        _atomic_write(os.path.join(out_dir, stem), buf.getvalue())
        errs = [r[1] for r in rows]
        orders = [r[2] for r in rows[1:]]
        rule_ok = (all(b < a for a, b in zip(errs, errs[1:]))
                   and all(bracket[0] <= o <= bracket[1] for o in orders))
        print(f"{rule}: orders={['%.3f' % o for o in orders]} "
              f"{'pass' if rule_ok else 'fail'}")
        ok = ok and rule_ok
    return EXIT_PASS if ok else EXIT_FAIL


def _ensure_out(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _overrides(args) -> dict:
    return {"seed": args.seed, "rtol": args.tol_rel, "atol": args.tol_abs}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="scenario config file (JSON)")
    p.add_argument("--seed", type=int, default=None, help="override run.seed")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--tol-rel", type=float, default=None, help="override relative tolerance")
    p.add_argument("--tol-abs", type=float, default=None, help="override absolute tolerance")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qfeedback-bench",
        description="Simulate and certify coherent-feedback noise suppression scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a scenario across feedback gains")
    _add_common(p_sweep)
    p_sweep.add_argument("--gamma", default=None, help="comma-separated gain list")
    p_sweep.add_argument("--workers", type=int, default=min(4, os.cpu_count() or 1))
    p_sweep.set_defaults(func=cmd_sweep)

    p_cert = sub.add_parser("certify", help="emit the spectral certificate only")
    _add_common(p_cert)
    p_cert.set_defaults(func=cmd_certify)

    p_disc = sub.add_parser("discretize", help="piecewise-constant convergence study")
    _add_common(p_disc)
    p_disc.add_argument("--cells", default="32,64,128,256", help="comma-separated cell counts")
    p_disc.set_defaults(func=cmd_discretize)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except scenario.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except propagate.IntegrationError as exc:
        print(f"integration failure: {exc} {exc.meta}", file=sys.stderr)
        return EXIT_INTEGRATION


if __name__ == "__main__":
    sys.exit(main())
