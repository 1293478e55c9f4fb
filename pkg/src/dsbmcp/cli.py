"""Command line interface.

Subcommands: ``simulate`` (scenario -> series files), ``detect``
(series + methods -> trajectory/fit CSVs), ``bench`` (replicated
experiment -> report CSV), ``bootstrap`` (series -> offset samples and
quantiles), ``diagnose`` (scenario -> signal report).

Scenario settings come from a TOML config file ([scenario] table with
a nested [scenario.params] table) and/or command line flags; flags win.
"""

import argparse
import sys
from pathlib import Path

import numpy as np
import tomli

from .bench import METHODS, ScenarioSpec, build_scenario, emit_trajectory, run_experiment
from .cluster import misclassification
from .cpd import (
    SearchGrid,
    estimate_2step,
    estimate_boundary_variant,
    estimate_every_time_point,
    estimate_known,
    write_fit_summary_csv,
    write_trajectory_csv,
)
from .infer import adaptive_bootstrap, snr_report, write_bootstrap_quantiles_csv, write_bootstrap_samples_csv
from .netcore import (
    CommunityAssignment,
    load_series_binary,
    load_series_text,
    sample_dsbm,
    save_series_binary,
    save_series_text,
)

_SCENARIO_KEYS = ("name", "m", "n", "tau", "K")


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML file with a [scenario] table")
    p.add_argument("--scenario", help="scenario name (I, II, III, IV, V, G, split, custom, ...)")
    p.add_argument("--m", type=int, help="number of nodes")
    p.add_argument("--n", type=int, help="number of time points")
    p.add_argument("--tau", type=float, help="break fraction in (0, 1)")
    p.add_argument("--K", type=int, help="community count override")
    p.add_argument("--delta", type=float, help="scenario exponent delta")
    p.add_argument("--lam", type=float, help="scenario exponent lambda")
    p.add_argument("--p1-sq", dest="p1_sq", type=float, help="squared base probability for scenario G")


def _scenario_from_args(args) -> ScenarioSpec:
    merged: dict = {"tau": 0.5, "params": {}}
    if args.config:
        with open(args.config, "rb") as fh:
            cfg = tomli.load(fh)
        table = cfg.get("scenario", cfg)
        for key in _SCENARIO_KEYS:
            if key in table:
                merged[key] = table[key]
        merged["params"].update(table.get("params", {}))
    if args.scenario:
        merged["name"] = args.scenario
    for key in ("m", "n", "tau", "K"):
        val = getattr(args, key)
        if val is not None:
            merged[key] = val
    for key in ("delta", "lam", "p1_sq"):
        val = getattr(args, key)
        if val is not None:
            merged["params"][key] = val
    missing = [k for k in ("name", "m", "n") if k not in merged]
    if missing:
        raise SystemExit(f"missing scenario settings: {', '.join(missing)} (use flags or --config)")
    return ScenarioSpec.from_dict(merged)


def _load_series(path: Path):
    with open(path, "rb") as fh:
        if fh.read(5) == b"DSBM1":
            return load_series_binary(path)
    return load_series_text(path)


def _grid(args, n: int) -> SearchGrid:
    if getattr(args, "grid_cstar", None):
        return SearchGrid.with_c_star(n, args.grid_cstar)
    return SearchGrid.full(n)


def _cmd_simulate(args) -> int:
    scenario = _scenario_from_args(args)
    spec = build_scenario(scenario)
    save = save_series_binary if args.format == "binary" else save_series_text
    out = Path(args.out)
    for r in range(args.reps):
        series = sample_dsbm(spec, (args.seed, r))
        path = out if args.reps == 1 else out.with_name(f"{out.stem}_r{r:03d}{out.suffix}")
        save(series, path)
        print(f"wrote {path} (m={series.m}, n={series.n}, break index {spec.tau_index})")
    return 0


def _detect_one(series, method: str, K, grid, seed, truth):
    if method == "known":
        if truth is None:
            raise SystemExit("method 'known' needs --truth-z and --truth-w")
        return estimate_known(series, truth[0], truth[1], grid)
    if K is None:
        raise SystemExit(f"method {method!r} needs --K")
    fn = {
        "2step": estimate_2step,
        "every_point": estimate_every_time_point,
        "boundary": estimate_boundary_variant,
    }[method]
    return fn(series, K, grid, seed=seed)


def _cmd_detect(args) -> int:
    series = _load_series(args.series)
    grid = _grid(args, series.n)
    truth = None
    if args.truth_z and args.truth_w:
        truth = (
            CommunityAssignment.from_line(args.truth_z.read_text()),
            CommunityAssignment.from_line(args.truth_w.read_text()),
        )
    fits = []
    for method in args.method:
        fit = _detect_one(series, method, args.K, grid, (args.seed,), truth)
        fits.append(fit)
        write_trajectory_csv(fit, f"{args.out_prefix}_trajectory_{method}.csv")
        print(f"{method}: break index {fit.tau_index} (fraction {fit.tau_hat:.4f})")
    write_fit_summary_csv(
        fits,
        f"{args.out_prefix}_fits.csv",
        truth_pre=truth[0] if truth else None,
        truth_post=truth[1] if truth else None,
    )
    if truth:
        for fit in fits:
            if fit.z_hat is not None:
                pre = misclassification(truth[0], fit.z_hat).rate
                post = misclassification(truth[1], fit.w_hat).rate
                print(f"{fit.method}: misclassification pre={pre:.4f} post={post:.4f}")
    return 0


def _cmd_bench(args) -> int:
    scenario = _scenario_from_args(args)
    grid = _grid(args, scenario.n)
    report = run_experiment(
        scenario,
        methods=args.methods,
        replicates=args.reps,
        seed=args.seed,
        parallelism=args.threads,
        K=args.K,
        grid=grid,
    )
    report.write_csv(args.out)
    s = report.snr
    print(f"scenario {scenario.name}: F_n={s.gap:.4f} (n/m^2)F_n={s.snr_er:.4f} (n/K^2)F_n={s.snr_dsbm:.2f}")
    print(f"Km/nu^2={s.a1_first:.4f} m*sqrt(n)/nu^2={s.a1_second:.4f}")
    for name, summ in report.methods.items():
        print(f"{name}: {summ.frequency_string()}  [errors={summ.errors}, {summ.seconds:.1f}s]")
    print(f"wrote {args.out}")
    return 0


def _cmd_bootstrap(args) -> int:
    series = _load_series(args.series)
    grid = _grid(args, series.n)
    fit = _detect_one(series, args.method, args.K, grid, (args.seed,), None)
    result = adaptive_bootstrap(
        fit, R=args.R, seed=(args.seed, 1), alpha=args.alpha, c_star=args.grid_cstar
    )
    write_bootstrap_samples_csv(result, f"{args.out_prefix}_samples.csv")
    write_bootstrap_quantiles_csv(result, f"{args.out_prefix}_quantiles.csv")
    share_zero = float(np.mean(result.h_samples == 0))
    print(
        f"{args.method}: break index {fit.tau_index}, offset median {np.median(result.h_samples):.1f}, "
        f"P(h=0)={share_zero:.3f}, tau interval [{result.interval[0]:.4f}, {result.interval[1]:.4f}]"
    )
    return 0


def _cmd_diagnose(args) -> int:
    scenario = _scenario_from_args(args)
    spec = build_scenario(scenario)
    s = snr_report(spec)
    rows = [
        ("F_n", s.gap),
        ("(n/m^2) F_n", s.snr_er),
        ("(n/K^2) F_n", s.snr_dsbm),
        ("nu_m", s.nu_m),
        ("K m / nu^2", s.a1_first),
        ("m sqrt(n) / nu^2", s.a1_second),
        ("m / (sqrt(n) nu^2)", s.a1_star),
        ("adaptive signal", s.snr_er_adap),
    ]
    for label, value in rows:
        print(f"{label:>20}: {value:.6f}")
    for note in spec.notes:
        print(f"note: {note}")
    if args.out:
        import csv as _csv

        with open(args.out, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["quantity", "value"])
            writer.writerows(rows)
        print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dsbmcp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample series files from a scenario")
    _add_scenario_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--format", choices=("text", "binary"), default="text")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("detect", help="estimate the break on a series file")
    p.add_argument("--series", type=Path, required=True)
    p.add_argument("--method", action="append", choices=METHODS, required=True)
    p.add_argument("--K", type=int)
    p.add_argument("--truth-z", type=Path, help="true pre assignment (one line of labels)")
    p.add_argument("--truth-w", type=Path, help="true post assignment")
    p.add_argument("--out-prefix", default="detect")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-cstar", type=float)
    p.set_defaults(fn=_cmd_detect)

    p = sub.add_parser("bench", help="replicated experiment over a scenario")
    _add_scenario_args(p)
    p.add_argument("--methods", nargs="+", choices=METHODS, default=["2step"])
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--grid-cstar", type=float)
    p.add_argument("--out", default="report.csv")
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("bootstrap", help="offset bootstrap for a fitted break")
    p.add_argument("--series", type=Path, required=True)
    p.add_argument("--method", choices=("2step", "every_point", "boundary"), default="2step")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--R", type=int, default=500)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-cstar", type=float)
    p.add_argument("--out-prefix", default="bootstrap")
    p.set_defaults(fn=_cmd_bootstrap)

    p = sub.add_parser("diagnose", help="signal and spectral diagnostics for a scenario")
    _add_scenario_args(p)
    p.add_argument("--out", help="optional CSV destination")
    p.set_defaults(fn=_cmd_diagnose)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
