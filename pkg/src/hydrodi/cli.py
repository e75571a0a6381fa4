"""Command line entry point: ``hydrodi <verb> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigError, DataError, HydroDIError, NumericError

log = logging.getLogger("hydrodi")

# argparse itself exits with 2 on usage errors
EXIT_CODES = {
    DataError: 3,
    ConfigError: 4,
    NumericError: 5,
    HydroDIError: 6,
}
EXIT_SELFTEST_FAILED = 1


def exit_code(exc: BaseException) -> int:
    for cls, code in EXIT_CODES.items():
        if isinstance(exc, cls):
            return code
    return EXIT_CODES[HydroDIError]


def _cmd_ingest(args) -> int:
    from .data import convert_camels, ingest

    root = args.root
    if args.camels:
        ids = convert_camels(args.camels, root, args.basins, args.forcing_source)
        log.info("converted %d CAMELS basins into %s", len(ids), root)
    records = ingest(root, args.basins)
    for r in records:
        n_missing = int((r.discharge != r.discharge).sum())
        print(f"{r.basin_id}\t{r.dates[0]}..{r.dates[-1]}\t{r.dates.size} days\t{n_missing} missing")
    print(f"{len(records)} basins")
    return 0


def _cmd_synth(args) -> int:
    from .data import write_records
    from .synth import synth_generate

    records, truth = synth_generate(args.n_basins, args.seed, args.regime, start=args.start, n_days=args.days)
    write_records(records, args.out)
    with open(f"{args.out}/generator_params.json", "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True, default=float)
    print(f"wrote {len(records)} {args.regime} basins to {args.out}")
    return 0


def _load(args):
    from .experiment import load_config

    cfg = load_config(args.config)
    if args.out:
        cfg.out_dir = args.out
    return cfg


def _cmd_train(args) -> int:
    from .experiment import train_stage

    print(train_stage(_load(args)))
    return 0


def _cmd_forecast(args) -> int:
    from .experiment import forecast_stage

    print(forecast_stage(_load(args)))
    return 0


def _cmd_evaluate(args) -> int:
    from .experiment import evaluate_stage

    out = evaluate_stage(_load(args))
    print((out / "aggregate.csv").read_text(), end="")
    return 0


def _cmd_run(args) -> int:
    from .experiment import run_experiment

    out = run_experiment(_load(args))
    print((out / "aggregate.csv").read_text(), end="")
    return 0


def _cmd_report(args) -> int:
    from .report import report

    written = report(args.runs, args.out)
    for kind, paths in written.items():
        for p in paths:
            print(f"{kind}\t{p}")
    return 0


def _cmd_selftest(args) -> int:
    from .acceptance import run_all

    results = run_all(set(args.only) if args.only else None)
    failed = [r for r in results if r.passed is False]
    print(f"{len(results) - len(failed)} of {len(results)} criteria passed or skipped")
    return EXIT_SELFTEST_FAILED if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hydrodi", description="LSTM streamflow forecasting with data integration")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("ingest", help="validate a data directory, optionally converting a CAMELS extract first")
    s.add_argument("root", help="data directory in the package layout")
    s.add_argument("--basins", nargs="*", help="basin ids (default: all in attributes.csv)")
    s.add_argument("--camels", metavar="DIR", help="native CAMELS directory to convert into ROOT")
    s.add_argument("--forcing-source", default="daymet")
    s.set_defaults(func=_cmd_ingest)

    s = sub.add_parser("synth", help="write synthetic basins in the package data layout")
    s.add_argument("out")
    s.add_argument("--n-basins", type=int, default=20)
    s.add_argument("--regime", choices=("high_acf", "flashy", "snowy"), default="high_acf")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--start", default="2000-01-01")
    s.add_argument("--days", type=int, default=1825)
    s.set_defaults(func=_cmd_synth)

    for verb, func, text in (
        ("train", _cmd_train, "fit preprocessing and ensemble members"),
        ("forecast", _cmd_forecast, "write test-period forecasts from saved members"),
        ("evaluate", _cmd_evaluate, "compute metrics and aggregates from forecasts"),
        ("run", _cmd_run, "train, forecast and evaluate in one go"),
    ):
        s = sub.add_parser(verb, help=text)
        s.add_argument("config", help="experiment JSON")
        s.add_argument("--out", help="override out_dir from the config")
        s.set_defaults(func=func)

    s = sub.add_parser("report", help="plot tables and figures from experiment directories")
    s.add_argument("runs", nargs="+", help="experiment directories, one per scheme")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_report)

    s = sub.add_parser("selftest", help="run the acceptance criteria")
    s.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    s.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HydroDIError as exc:
        log.error("%s", exc)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
