"""Command-line front end: analyze, design, simulate, complexity.

Scenario files are YAML with strict key checking (unknown keys are
rejected).  Angles are radians in files and CSV output; plots convert to
degrees per aircraft convention.  Exit codes: 0 success, 2 configuration
error, 3 assumption-audit failure, 4 divergence or tracking failure.
"""

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from .adaptive import AdaptationGains, nominal_truth
from .complexity import (complexity_report, reduction_conditions, sweep_csv,
                         sweep_n0)
from .errors import (AssumptionError, ConfigError, DimensionError,
                     DivergenceError, MatchingError)
from .interactor import (InteractorBundle, find_diagonal_interactor,
                         high_freq_gain, lds_decompose)
from .matching import (FilterSpec, save_params, solve_matching,
                       verify_matching)
from .plant import (PartialStateSelector, check_observable, gtm_model,
                    load_state_space, transmission_zeros)
from .polymatrix import Polynomial
from .simulate import (ReferenceInput, Scenario, case_presets, compute_metrics,
                       gtm_reference, run_closed_loop, theta_trajectory_to_csv,
                       trajectory_to_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_AUDIT = 3
EXIT_DIVERGED = 4


# -- scenario files ---------------------------------------------------

_SCHEMA = {
    "plant": {"preset", "file"},
    "selector": {"states", "rows"},
    "interactor": {"a", "degrees", "entries"},
    "filters": {"lambda_pole", "f_pole", "lambda_coeffs", "f_coeffs"},
    "gains": {"gamma", "gamma_theta", "gamma_mag"},
    "reference": {"channels", "offsets"},
    "initial": {"x0", "psi0_scale"},
    "horizon": {"t_end", "dt"},
    "output": {"csv", "params_csv", "plots_dir", "params"},
}


def _check_keys(doc):
    if not isinstance(doc, dict):
        raise ConfigError("scenario file must be a mapping")
    for key, sub in doc.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown scenario key {key!r}")
        if sub is None:
            continue
        if not isinstance(sub, dict):
            raise ConfigError(f"section {key!r} must be a mapping")
        extra = set(sub) - _SCHEMA[key]
        if extra:
            raise ConfigError(f"unknown keys {sorted(extra)} in section {key!r}")


def load_scenario_file(path):
    """Parse a scenario YAML file into its raw validated dictionary."""
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}")
    _check_keys(doc)
    return doc


def _plant_from(doc):
    section = doc.get("plant") or {"preset": "gtm"}
    if "file" in section:
        return load_state_space(section["file"])
    preset = section.get("preset", "gtm")
    if preset != "gtm":
        raise ConfigError(f"unknown plant preset {preset!r}")
    return gtm_model()


def _selector_from(doc, plant):
    section = doc.get("selector")
    if not section:
        raise ConfigError("scenario needs a selector section")
    if "states" in section:
        return PartialStateSelector.from_states(plant.n, section["states"])
    return PartialStateSelector(np.array(section["rows"], dtype=float))


def _interactor_from(doc, plant):
    section = doc.get("interactor") or {}
    a = float(section.get("a", 2.0))
    if "entries" in section:
        from .polymatrix import PolyMatrix
        entries = [[Polynomial(c) for c in row] for row in section["entries"]]
        return InteractorBundle(PolyMatrix(entries))
    if "degrees" in section:
        return InteractorBundle.diagonal([int(d) for d in section["degrees"]], a)
    return find_diagonal_interactor(plant.transfer(), a)


def _filters_from(doc, plant, sel, xi):
    section = doc.get("filters") or {}
    if "lambda_coeffs" in section or "f_coeffs" in section:
        lam = Polynomial(section["lambda_coeffs"]) if "lambda_coeffs" in section \
            else FilterSpec.default(plant.n, sel.n0, xi.d_m).Lambda
        f = Polynomial(section["f_coeffs"]) if "f_coeffs" in section \
            else FilterSpec.default(plant.n, sel.n0, xi.d_m).f
        return FilterSpec(lam, f)
    return FilterSpec.default(plant.n, sel.n0, xi.d_m,
                              lambda_pole=float(section.get("lambda_pole", 1.1)),
                              f_pole=float(section.get("f_pole", 2.0)))


def _reference_from(doc, plant):
    section = doc.get("reference")
    if not section:
        return gtm_reference() if plant.M == 2 else ReferenceInput.sinusoids(
            [0.3] * plant.M, [0.1] * plant.M)
    channels = [[(float(a), float(w), float(p)) for a, w, p in ch]
                for ch in section["channels"]]
    offsets = section.get("offsets")
    return ReferenceInput(channels, offsets)


def scenario_from_file(path):
    """Build a full Scenario (with ground truth when solvable) from a YAML file."""
    doc = load_scenario_file(path)
    plant = _plant_from(doc)
    sel = _selector_from(doc, plant)
    xi = _interactor_from(doc, plant)
    fspec = _filters_from(doc, plant, sel, xi)
    gsec = doc.get("gains") or {}
    kp = high_freq_gain(plant.transfer(), xi)
    lds = lds_decompose(kp, gamma=float(gsec.get("gamma_mag", 1.0)) * np.ones(plant.M))
    gains = AdaptationGains.uniform(
        plant.M, np.sign(np.diag(lds.D_s)),
        gamma=float(gsec.get("gamma", 5.0)),
        gamma_theta=float(gsec.get("gamma_theta", 5.0)),
        gamma_mag=float(gsec.get("gamma_mag", 1.0)))
    ref = _reference_from(doc, plant)
    init = doc.get("initial") or {}
    x0 = np.array(init.get("x0", np.zeros(plant.n)), dtype=float)
    hor = doc.get("horizon") or {}
    truth = None
    try:
        sol = solve_matching(plant, sel, xi, fspec)
        truth = nominal_truth(sol.params, lds)
    except MatchingError:
        pass
    return Scenario(
        plant=plant, sel=sel, xi=xi, fspec=fspec, gains=gains, reference=ref,
        x0=x0, t_end=float(hor.get("t_end", 400.0)), dt=float(hor.get("dt", 0.005)),
        psi0_scale=float(init.get("psi0_scale", 1.0)), truth=truth,
        label=Path(path).stem), doc


# -- commands ----------------------------------------------------------

def cmd_analyze(args):
    plant = load_state_space(args.plant) if args.plant else gtm_model()
    print(f"plant: n = {plant.n}, M = {plant.M}")
    print("audit: A1 stable transmission zeros, A2 strictly proper full-rank "
          "G with a known interactor, A3 observable selector, A4 nonzero "
          "leading principal minors of Kp with known signs")
    failures = []

    G = plant.transfer()
    print(f"strictly proper: {G.strictly_proper}")
    if not G.strictly_proper:
        failures.append("G not strictly proper")
    try:
        zeros = transmission_zeros(plant)
        print("transmission zeros:")
        for z in zeros:
            print(f"  {z:.6g}")
        if zeros.size and np.max(zeros.real) >= 0:
            failures.append("unstable transmission zero (A1 fails)")
    except AssumptionError as exc:
        print(f"transmission zeros: FAILED ({exc})")
        failures.append(str(exc))
        zeros = None

    try:
        xi = find_diagonal_interactor(G, args.a)
        print(f"diagonal interactor found: degrees {xi.diag_degrees}, pole -{args.a}")
        kp = high_freq_gain(G, xi)
        print("high-frequency gain Kp:")
        for row in kp.Kp:
            print("  " + "  ".join(f"{v: .6g}" for v in row))
        print("leading principal minors:", " ".join(f"{m:.6g}" for m in kp.minors))
        print("minor signs:", " ".join("+" if s > 0 else "-" for s in kp.signs))
        if not kp.minors_nonzero():
            failures.append("zero leading principal minor (A4 fails)")
        else:
            lds = lds_decompose(kp)
            print("LDS factors (gamma = 1):")
            print("  L_s =", np.array2string(lds.L_s, precision=6))
            print("  D_s =", np.array2string(np.diag(lds.D_s), precision=6))
            print("  S   =", np.array2string(lds.S, precision=6))
    except AssumptionError as exc:
        print(f"interactor/gain audit: FAILED ({exc})")
        failures.append(str(exc))

    if args.selector_states:
        try:
            sel = PartialStateSelector.from_states(plant.n, args.selector_states)
            rep = check_observable(plant.A, sel.C0)
            print(f"selector states {args.selector_states}: rank {sel.n0}, "
                  f"observable = {rep.observable} (gap {rep.gap:.3e})")
            if not rep.observable:
                failures.append("(A, C0) unobservable (A3 fails)")
        except Exception as exc:
            print(f"selector audit: FAILED ({exc})")
            failures.append(str(exc))

    if failures:
        print("AUDIT FAILED:")
        for f in failures:
            print("  -", f)
        return EXIT_AUDIT
    print("AUDIT PASSED (A1, A2, A4" + (", A3" if args.selector_states else "") + ")")
    return EXIT_OK


def _scenario_from_args(args):
    if args.scenario:
        sc, _ = scenario_from_file(args.scenario)
        return sc
    if args.case:
        kwargs = {}
        if args.t_end is not None:
            kwargs["t_end"] = args.t_end
        if args.dt is not None:
            kwargs["dt"] = args.dt
        return case_presets(cases=[args.case], **kwargs)[0]
    raise ConfigError("need --scenario FILE or --case N")


def cmd_design(args):
    sc = _scenario_from_args(args)
    sol = solve_matching(sc.plant, sc.sel, sc.xi, sc.fspec)
    print(f"matching residual: {sol.residual:.3e}")
    print(f"smallest singular value of the sampled system: {sol.min_singular_value:.3e}")
    out = args.out or f"{sc.label}_params.txt"
    save_params(sol.params, out)
    print(f"nominal parameters written to {out}")
    if args.verify:
        rep = verify_matching(sol, sc.plant, sc.sel, sc.xi, sc.fspec)
        print(f"time-domain verification: sup|e| = {rep.sup_error:.3e} "
              f"(bound {1e-3 * rep.reference_amplitude:.3e}), passed = {rep.passed}")
        if not rep.passed:
            return EXIT_DIVERGED
    return EXIT_OK


def _plot_trajectory(tr, sc, outdir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    deg = 180.0 / np.pi
    M = tr.y.shape[1]

    fig, axes = plt.subplots(M, 1, figsize=(8, 3 * M), sharex=True)
    axes = np.atleast_1d(axes)
    for i, ax in enumerate(axes):
        ax.plot(tr.t, tr.ym[:, i] * deg, "k--", label="reference")
        ax.plot(tr.t, tr.y[:, i] * deg, "b-", lw=0.8, label="plant")
        ax.set_ylabel(f"y{i + 1} [deg]")
        ax.legend(loc="upper right")
    axes[-1].set_xlabel("t [s]")
    fig.suptitle(f"{sc.label}: output vs reference")
    fig.savefig(outdir / f"{sc.label}_tracking.svg")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(8, 3))
    for i in range(tr.u.shape[1]):
        ax.plot(tr.t, tr.u[:, i] * deg, lw=0.8, label=f"u{i + 1}")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("u [deg]")
    ax.legend()
    fig.suptitle(f"{sc.label}: control inputs")
    fig.savefig(outdir / f"{sc.label}_inputs.svg")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(tr.t, np.linalg.norm(tr.e, axis=1), lw=0.8)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("||e||")
    fig.suptitle(f"{sc.label}: tracking error norm")
    fig.savefig(outdir / f"{sc.label}_error.svg")
    plt.close(fig)

    if not np.all(np.isnan(tr.V)):
        fig, ax = plt.subplots(figsize=(8, 3))
        ax.plot(tr.t, tr.V, lw=0.8)
        ax.set_xlabel("t [s]")
        ax.set_ylabel("V")
        fig.suptitle(f"{sc.label}: Lyapunov diagnostic")
        fig.savefig(outdir / f"{sc.label}_lyapunov.svg")
        plt.close(fig)


def _run_one(sc, args):
    mode = "adaptive"
    frozen = None
    if args.frozen_truth:
        sol = solve_matching(sc.plant, sc.sel, sc.xi, sc.fspec)
        mode, frozen = "frozen", sol.params
    tr = run_closed_loop(sc, mode=mode, frozen_params=frozen)
    metrics = compute_metrics(tr)

    outdir = Path(args.out_dir or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{sc.label}_trajectory.csv"
    trajectory_to_csv(tr, csv_path)
    print(f"[{sc.label}] trajectory CSV: {csv_path}")
    if args.params_csv:
        pcsv = outdir / f"{sc.label}_theta.csv"
        theta_trajectory_to_csv(tr, pcsv)
        print(f"[{sc.label}] parameter CSV: {pcsv}")
    if not args.no_plots:
        _plot_trajectory(tr, sc, outdir)
        print(f"[{sc.label}] plots in {outdir}")

    print(f"[{sc.label}] metrics:")
    for key, val in metrics.as_dict().items():
        print(f"  {key} = {val}")
    if tr.diverged:
        print(f"[{sc.label}] DIVERGED at step {tr.divergence_step}")
        return EXIT_DIVERGED
    amps = sc.reference.amplitudes
    if mode == "adaptive":
        ok = bool(np.all(metrics.final_window_mean_abs_e < 0.05 * amps))
        print(f"[{sc.label}] tracking window check (< 5% amplitude): "
              f"{'pass' if ok else 'FAIL'}")
        if not ok:
            return EXIT_DIVERGED
    else:
        tail = tr.e[int(0.75 * tr.t.size):]
        ok = bool(np.max(np.abs(tail)) < 1e-3 * np.max(amps))
        print(f"[{sc.label}] frozen matching check (last 25%): "
              f"{'pass' if ok else 'FAIL'}")
        if not ok:
            return EXIT_DIVERGED
    return EXIT_OK


def cmd_simulate(args):
    if args.all_cases:
        codes = []
        kwargs = {}
        if args.t_end is not None:
            kwargs["t_end"] = args.t_end
        if args.dt is not None:
            kwargs["dt"] = args.dt
        for sc in case_presets(**kwargs):
            codes.append(_run_one(sc, args))
        return max(codes)
    sc = _scenario_from_args(args)
    return _run_one(sc, args)


def cmd_complexity(args):
    if args.find_min_M:
        rc = reduction_conditions(args.n, max(1, args.M or 1))
        print(f"n = {args.n}: minimizing M = {rc.minimizing_M_integer} "
              f"(continuous optimum {rc.minimizing_M_continuous}), "
              f"max saving {rc.max_saving_integer} "
              f"(formula (n-2)^2/8 = {rc.max_saving_formula})")
        return EXIT_OK
    if args.M is None:
        raise ConfigError("complexity needs -M (and --n0 unless sweeping)")
    if args.sweep_n0:
        reports = sweep_n0(args.n, args.M, args.n_h, args.n_e)
        print(sweep_csv(reports), end="")
        return EXIT_OK
    if args.n0 is None:
        raise ConfigError("complexity needs --n0 or --sweep-n0")
    rep = complexity_report(args.n, args.M, args.n0, args.n_h, args.n_e)
    for line in rep.lines():
        print(line)
    rc = rep.conditions
    print(f"regime: {rc.regime}; reduction at n0 in {rc.reduced_n0}")
    if rc.prose_mismatch:
        print(f"note: the simplified threshold rule disagrees with the "
              f"quadratic at n0 in {rc.prose_mismatch}; the quadratic governs")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="psmrac",
        description="Partial-state feedback multivariable MRAC toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="audit plant assumptions A1-A4 (and A3 with a selector)")
    pa.add_argument("--preset", choices=["gtm"], default="gtm")
    pa.add_argument("--plant", help="plant matrix file (overrides preset)")
    pa.add_argument("--a", type=float, default=2.0, help="interactor pole location")
    pa.add_argument("--selector-states", type=int, nargs="+",
                    help="1-indexed states for the A3 audit")
    pa.set_defaults(func=cmd_analyze)

    pd = sub.add_parser("design", help="solve nominal matching and write a parameter file")
    pd.add_argument("--scenario", help="scenario YAML file")
    pd.add_argument("--case", type=int, choices=range(1, 7), help="GTM preset case")
    pd.add_argument("--t-end", type=float, default=None)
    pd.add_argument("--dt", type=float, default=None)
    pd.add_argument("--out", help="parameter file path")
    pd.add_argument("--verify", action="store_true",
                    help="run the frozen-parameter time-domain check")
    pd.set_defaults(func=cmd_design)

    ps = sub.add_parser("simulate", help="run the closed loop; write CSV, metrics, plots")
    ps.add_argument("--scenario", help="scenario YAML file")
    ps.add_argument("--case", type=int, choices=range(1, 7), help="GTM preset case")
    ps.add_argument("--all-cases", action="store_true", help="run presets I-VI")
    ps.add_argument("--frozen-truth", action="store_true",
                    help="hold parameters at the solved nominal values")
    ps.add_argument("--t-end", type=float, default=None)
    ps.add_argument("--dt", type=float, default=None)
    ps.add_argument("--out-dir", help="output directory (default: cwd)")
    ps.add_argument("--params-csv", action="store_true",
                    help="also write decimated parameter snapshots")
    ps.add_argument("--no-plots", action="store_true")
    ps.set_defaults(func=cmd_simulate)

    pc = sub.add_parser("complexity", help="adaptation-complexity accounting")
    pc.add_argument("-n", type=int, required=True)
    pc.add_argument("-M", type=int)
    pc.add_argument("--n0", type=int)
    pc.add_argument("--n-h", type=int, default=None, help="degree of f(s)")
    pc.add_argument("--n-e", type=int, default=None, help="ebar filter order")
    pc.add_argument("--sweep-n0", action="store_true")
    pc.add_argument("--find-min-M", action="store_true")
    pc.set_defaults(func=cmd_complexity)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DimensionError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionError as exc:
        print(f"assumption audit failure: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except (MatchingError, DivergenceError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
