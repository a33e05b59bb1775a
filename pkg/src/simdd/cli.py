"""Command-line entry point.

Subcommands mirror the benchmark families: `convergence`, `mse` and `ber`
write a CSV plus a rendered figure under <out>/<subcommand>/; `oracle-check`
and `selftest` run the built-in verification suites. A fixed seed makes
every CSV byte-identical across runs.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

from . import figures, harness
from .estimator import export_estimates_csv
from .scenario import ScenarioError, ScenarioSpec, default_scenario, load_scenario
from .waveforms import ALL_WAVEFORMS, WaveformKind


def _parse_waveforms(value: str) -> list[WaveformKind]:
    if value == "all":
        return list(ALL_WAVEFORMS)
    return [WaveformKind(value)]


def _parse_modes(value: str) -> list[str]:
    if value == "all":
        return list(harness.SIM_MODES)
    return [value]


def _parse_snrs(value: str) -> list[float]:
    try:
        return [float(part) for part in value.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad SNR list {value!r}") from exc


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simdd",
        description="Metasurface-parametrized doubly-dispersive channel benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", help="scenario JSON (default: built-in desk profile)")
        p.add_argument("--out", default="out", help="output directory root")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--label", help="output file stem (default derived from flags)")

    p = sub.add_parser("convergence", help="optimizer trace for one realization")
    common(p)

    for name, text in (("mse", "sensing accuracy sweep"),
                       ("ber", "bit error rate sweep")):
        p = sub.add_parser(name, help=text)
        common(p)
        p.add_argument("--trials", type=int, default=100)
        p.add_argument("--snr", type=_parse_snrs, default=None,
                       help="comma-separated SNR points in dB")
        p.add_argument("--waveform", default="all",
                       choices=["ofdm", "otfs", "afdm", "all"])
        p.add_argument("--sim-mode", default="all",
                       choices=["none", "random", "optimized", "all"])
        if name == "mse":
            p.add_argument("--dump-estimates", action="store_true",
                           help="also write per-trial estimate rows")

    p = sub.add_parser("oracle-check", help="matrix model vs time-domain simulation")
    common(p)
    p = sub.add_parser("selftest", help="unitarity, oracle and gradient suites")
    common(p)
    return parser


def _load(args) -> ScenarioSpec:
    if args.scenario is None:
        scenario = default_scenario()
    else:
        scenario = load_scenario(args.scenario)
    if args.seed is not None:
        from dataclasses import replace
        scenario = replace(scenario, seed=int(args.seed))
    return scenario


def _outdir(args) -> str:
    path = os.path.join(args.out, args.command)
    os.makedirs(path, exist_ok=True)
    return path


def _run_convergence(args) -> int:
    scenario = _load(args)
    trace = harness.run_convergence(scenario)
    label = args.label or f"seed{scenario.seed}"
    outdir = _outdir(args)
    csv_path = os.path.join(outdir, f"{label}.csv")
    harness.write_convergence_csv(trace, csv_path)
    fig_path = figures.plot_convergence(csv_path, os.path.join(outdir, f"{label}.svg"))
    status = "converged" if trace.converged else "not converged"
    print(f"convergence: {trace.iterations} iterations, "
          f"{trace.target_switches} target switches, {status}")
    print(f"wrote {csv_path}")
    print(f"wrote {fig_path}")
    return 0


def _run_sweep(args, kind: str) -> int:
    scenario = _load(args)
    waveforms = _parse_waveforms(args.waveform)
    modes = _parse_modes(args.sim_mode)
    snrs = args.snr if args.snr is not None else [0.0, 10.0, 20.0, 30.0]
    label = args.label or (f"{args.waveform}_{args.sim_mode}_seed{scenario.seed}"
                           f"_t{args.trials}")
    outdir = _outdir(args)
    csv_path = os.path.join(outdir, f"{label}.csv")
    if kind == "mse":
        dump = [] if args.dump_estimates else None
        result = harness.run_mse_sweep(scenario, snrs, args.trials, waveforms,
                                       modes, estimate_dump=dump)
        harness.write_sweep_csv(result, csv_path)
        fig_path = figures.plot_mse(csv_path, os.path.join(outdir, f"{label}.svg"))
        if dump is not None:
            dump_path = os.path.join(outdir, f"{label}_estimates.csv")
            export_estimates_csv(dump_path, dump)
            print(f"wrote {dump_path}")
    else:
        result = harness.run_ber_sweep(scenario, snrs, args.trials, waveforms, modes)
        harness.write_sweep_csv(result, csv_path)
        fig_path = figures.plot_ber(csv_path, os.path.join(outdir, f"{label}.svg"))
    print(f"{kind}: {len(result.rows)} rows over {args.trials} trials, "
          f"{len(waveforms)} waveform(s), {len(modes)} mode(s), {len(snrs)} SNR point(s)")
    print(f"wrote {csv_path}")
    print(f"wrote {fig_path}")
    return 0


def _run_checks(args, suites: str) -> int:
    scenario = _load(args)
    if suites == "oracle-check":
        results = harness.oracle_suite(scenario.seed, sizes=(8, 16, 32, 64),
                                       draws_per_size=4)
    else:
        results = harness.run_selftest(scenario.seed)
    label = args.label or f"seed{scenario.seed}"
    outdir = _outdir(args)
    csv_path = os.path.join(outdir, f"{label}.csv")
    harness.write_check_csv(results, csv_path)
    by_suite: dict[str, list[bool]] = {}
    for row in results:
        by_suite.setdefault(row["suite"], []).append(row["passed"])
    failed = 0
    for suite, passes in sorted(by_suite.items()):
        good = sum(passes)
        failed += len(passes) - good
        print(f"{suite}: {good}/{len(passes)} passed")
    print(f"wrote {csv_path}")
    return 0 if failed == 0 else 1


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "convergence":
            return _run_convergence(args)
        if args.command in ("mse", "ber"):
            return _run_sweep(args, args.command)
        if args.command in ("oracle-check", "selftest"):
            return _run_checks(args, args.command)
        parser.error(f"unknown command {args.command!r}")
        return 2
    except (ScenarioError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
