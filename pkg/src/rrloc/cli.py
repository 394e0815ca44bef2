"""Command-line entry point.

Subcommands
-----------
simulate
    Generate the configured leadfield set and one recording; write both as
    CSV bundles into the output directory.
localize
    Simulate one benchmark cell and localize it with every configured index
    family; print a JSON result (found candidates, index trace, errors).
bench
    Run the full Monte-Carlo sweep and write ``errors.csv``,
    ``pvalues.csv``, ``ranks.csv`` (and SVG figures with ``--svg``).
report
    Render the figures from an existing output directory's CSVs.
selftest
    Run the built-in exact-covariance invariant battery.

Exit codes: 0 success, 1 configuration/usage error, 2 numerical-contract
violation.  Logs go to stderr; artifacts go to ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, load_config
from .forward import save_leadfields
from .harness import build_leadfields, run_experiment, run_single, write_all_csv
from .matcore import ContractViolation
from .signals import save_recording, simulate_recording

log = logging.getLogger("rrloc")

#: Environment variable supplying the default worker count for `bench`.
JOBS_ENV_VAR = "RRLOC_JOBS"


def _add_common(sub: argparse.ArgumentParser, config_required: bool = True):
    sub.add_argument("--config", required=config_required,
                     help="path to an INI config file")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the config's seed_base")
    sub.add_argument("-v", "--verbose", action="count", default=0,
                     help="increase log verbosity (-v, -vv)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rrloc",
        description="Reduced-rank activity-index source localization benchmark.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_sim = subs.add_parser("simulate", help="write a simulated recording bundle")
    _add_common(p_sim)

    p_loc = subs.add_parser("localize", help="localize one simulated recording")
    _add_common(p_loc)

    p_bench = subs.add_parser("bench", help="run the Monte-Carlo benchmark")
    _add_common(p_bench)
    # string default so argparse runs the int conversion itself: a garbage
    # env value then reports as a usage error instead of crashing here
    p_bench.add_argument(
        "--jobs", type=int,
        default=os.environ.get(JOBS_ENV_VAR, "1"),
        help=f"worker processes (default from ${JOBS_ENV_VAR} or 1)")
    p_bench.add_argument("--svg", action="store_true",
                         help="also render SVG figures next to the CSVs")

    p_rep = subs.add_parser("report", help="render figures from benchmark CSVs")
    _add_common(p_rep, config_required=False)

    p_self = subs.add_parser("selftest", help="run the invariant battery")
    p_self.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def _setup_logging(verbosity: int):
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load(args) -> "ExperimentConfig":
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed_base=args.seed)
    return cfg


def _out_dir(args, default: str = "rrloc_out") -> Path:
    out = Path(args.out) if args.out else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    leads = build_leadfields(cfg)
    save_leadfields(leads, out / "leadfields")
    rec = simulate_recording(
        leads,
        theta0=tuple(range(cfg.l0)),
        snr_db=cfg.snr_grid_db[0],
        t_pre=cfg.samples_pre,
        t_post=cfg.samples_post,
        seed=cfg.seed_base,
        mvar_order=cfg.mvar_order,
        background_sources=cfg.background_sources,
        sensor_noise_db=cfg.sensor_noise_db,
    )
    save_recording(rec, out / "recording")
    log.info("achieved SNR %.3f dB (target %.3f dB)",
             rec.achieved_snr_db, rec.snr_db)
    print(str(out))
    return 0


def _cmd_localize(args) -> int:
    cfg = _load(args)
    record = run_single(cfg, snr_idx=0, run_id=0)
    if record.error is not None:
        raise ContractViolation(record.error)
    payload = {
        "snr_db": record.snr_db,
        "theta0": list(record.theta0),
        "r_selected": record.r_selected,
        "achieved_snr_db": record.achieved_snr_db,
        "results": {
            label: {
                "found": list(res.found),
                "index_trace": list(res.index_trace),
                "r_used": res.r_used,
                "errors_mm": list(res.errors_mm) if res.errors_mm else None,
            }
            for label, res in sorted(record.results.items())
        },
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        out = _out_dir(args)
        (out / "localization.json").write_text(text + "\n")
        log.info("wrote %s", out / "localization.json")
    print(text)
    return 0


def _cmd_bench(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    log.info("benchmark: %d SNR levels x %d runs, jobs=%d",
             len(cfg.snr_grid_db), cfg.runs, args.jobs)
    records = run_experiment(cfg, jobs=args.jobs)
    failures = [r for r in records if r.error is not None]
    for rec in failures:
        log.warning("run %d @ %g dB failed: %s", rec.run_id, rec.snr_db, rec.error)
    paths = write_all_csv(records, out)
    for name, path in paths.items():
        log.info("wrote %s", path)
    if args.svg:
        from .report import render_report

        for path in render_report(out):
            log.info("wrote %s", path)
    if failures:
        log.warning("%d of %d runs failed", len(failures), len(records))
    print(str(out))
    return 0


def _cmd_report(args) -> int:
    if not args.out:
        raise ConfigError("report needs --out pointing at a benchmark directory")
    from .report import render_report

    for path in render_report(Path(args.out)):
        log.info("wrote %s", path)
        print(str(path))
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest()
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  {r.detail}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 2


_COMMANDS = {
    "simulate": _cmd_simulate,
    "localize": _cmd_localize,
    "bench": _cmd_bench,
    "report": _cmd_report,
    "selftest": _cmd_selftest,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; remap to 1
        return 0 if exc.code in (0, None) else 1
    _setup_logging(getattr(args, "verbose", 0))
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 1
    except ContractViolation as exc:
        log.error("numerical contract violation: %s", exc)
        return 2


def main() -> None:
    sys.exit(run())
