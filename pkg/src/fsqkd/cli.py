"""Command-line entry point: simulate, distill, reproduce.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import datasets
from .channel import first_link_bin, load_link_trace
from .distill import DecoyInputs, save_bin_csv
from .errors import ConfigError, EmptyKey, FsqkdError, ParseError, RangeError
from .pipeline import (
    distill_records,
    parse_scenario,
    run_simulation,
    write_simulation,
)
from .receiver import load_records, load_records_csv
from .source import load_pattern

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _kbps(value) -> str:
    return "n/a" if value is None else f"{value / 1e3:.1f} kbps"


def cmd_simulate(args) -> int:
    cfg = parse_scenario(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    result = run_simulation(cfg)
    paths = write_simulation(result, args.out)
    print(f"simulated {result.manifest['n_slots_simulated']} slots "
          f"({result.manifest['duration']:.3f} s at stride {cfg.slot_stride})")
    print(f"records: {result.manifest['n_records']} -> {paths['records']}")
    return EXIT_OK


def _load_manifest(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"manifest: {exc}") from None


def cmd_distill(args) -> int:
    manifest = _load_manifest(args.manifest) if args.manifest else {}

    def setting(name, default=None):
        cli_value = getattr(args, name, None)
        if cli_value is not None:
            return cli_value
        return manifest.get(name, default)

    records_path = Path(args.records)
    records = (
        load_records_csv(records_path)
        if records_path.suffix == ".csv"
        else load_records(records_path)
    )
    pattern = load_pattern(args.pattern)

    trace = load_link_trace(args.trace) if args.trace else None
    n_bins = trace.n_bins if trace is not None else None
    link_start = first_link_bin(trace) if trace is not None else None

    rep_rate = float(setting("rep_rate", 1e8))
    r_static_ref = setting("r_static_ref")
    if r_static_ref is None:
        raise ConfigError("r_static_ref required (flag --r-static-ref or manifest)")

    decoy = None
    if args.decoy:
        with open(args.decoy, "r", encoding="utf-8") as fh:
            gains = json.load(fh)
        try:
            decoy = DecoyInputs(**gains)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"decoy gains file: {exc}") from None

    report, bins, choice = distill_records(
        records,
        pattern,
        rep_rate=rep_rate,
        bin_duration=float(setting("bin_duration", 0.01)),
        r_static_ref=float(r_static_ref),
        mu=float(setting("mu", 0.042)),
        t_bob=float(setting("t_bob", 0.409)),
        eta=float(setting("eta", 0.38)),
        q=float(setting("q", 1.0)),
        f=float(setting("f", 1.22)),
        rate_scale=float(setting("rate_scale", 1.0)),
        xi_thr=args.xi_thr,
        optimize=args.optimize,
        n_bins=n_bins,
        link_start_bin=link_start,
        decoy=decoy,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.save_json(out / "report.json")
    save_bin_csv(bins, out / "bins.csv")

    from .figures import plot_bin_trace, plot_threshold_curve

    plot_bin_trace(bins, out / "bins.png", xi_thr=report.xi_thr)
    if choice is not None:
        plot_threshold_curve(choice, out / "threshold.png")

    print(f"r_raw      {_kbps(report.r_raw)}")
    print(f"r_sift     {_kbps(report.r_sift)}")
    print(f"qber       {100 * report.qber:.2f} %")
    print(f"delta      {report.delta:.4f}")
    if report.xi_thr is not None:
        print(f"xi_thr     {report.xi_thr:.2f}")
    print(f"xi_link    {report.xi_link:.3f}")
    print(f"r_sec_gllp {_kbps(report.r_sec_gllp)}")
    if report.r_sec_decoy is not None:
        print(f"r_sec_decoy {_kbps(report.r_sec_decoy)}")
    print(f"report -> {out / 'report.json'}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    rows = {
        "static": datasets.reproduce_static,
        "handheld": datasets.reproduce_handheld,
        "decoy": datasets.reproduce_decoy,
    }[args.table]()

    width = max(len(r.name) for r in rows)
    print(f"{'case':<{width}}  {'reference':>10}  {'computed':>10}  rel.err")
    for r in rows:
        print(
            f"{r.name:<{width}}  {r.reference_bps / 1e3:>8.1f} k  "
            f"{r.computed_bps / 1e3:>8.1f} k  {r.relative_error:+.2%}"
        )
    if args.table == "decoy":
        verdict = "exceeds" if rows[0].computed_bps > rows[0].reference_bps else "BELOW"
        print(f"projection {verdict} the {rows[0].reference_bps / 1e3:.0f} kbps mark")

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"reproduce_{args.table}.csv"
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write("case,reference_bps,computed_bps,relative_error\n")
            for r in rows:
                fh.write(f"{r.name},{r.reference_bps:.17g},{r.computed_bps:.17g},{r.relative_error:.17g}\n")
        from .figures import plot_comparison

        plot_comparison(rows, out / f"reproduce_{args.table}.png", title=args.table)
        print(f"written -> {csv_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsqkd",
        description="Simulate and analyze a hand-held free-space BB84 link.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a scenario into a click stream")
    p_sim.add_argument("--config", required=True, help="scenario INI file")
    p_sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_dis = sub.add_parser("distill", help="distill a click stream into key rates")
    p_dis.add_argument("--records", required=True, help="record file (.bin or .csv)")
    p_dis.add_argument("--pattern", required=True, help="sender pattern file")
    p_dis.add_argument("--manifest", default=None, help="manifest.json from simulate")
    p_dis.add_argument("--trace", default=None, help="link trace CSV (bin alignment)")
    group = p_dis.add_mutually_exclusive_group()
    group.add_argument("--xi-thr", dest="xi_thr", type=float, default=None,
                       help="fixed transmission threshold")
    group.add_argument("--optimize", action="store_true",
                       help="scan for the optimal threshold")
    p_dis.add_argument("--decoy", default=None, help="JSON file with decoy gains")
    for flag, conv in (
        ("--mu", float), ("--t-bob", float), ("--eta", float), ("--q", float),
        ("--f", float), ("--rep-rate", float), ("--bin-duration", float),
        ("--r-static-ref", float), ("--rate-scale", float),
    ):
        p_dis.add_argument(flag, type=conv, default=None)
    p_dis.add_argument("--out", required=True, help="output directory")
    p_dis.set_defaults(func=cmd_distill)

    p_rep = sub.add_parser("reproduce", help="re-evaluate the reference datasets")
    p_rep.add_argument("--table", required=True, choices=("static", "handheld", "decoy"))
    p_rep.add_argument("--out", default=None, help="optional output directory")
    p_rep.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, RangeError, EmptyKey) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FsqkdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
