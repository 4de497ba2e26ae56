"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigurationError
from .harness import (correlations_for, eval_estimator, export_dataset,
                      load_config, run_sweep)
from .linear import DespreadConfig
from .wire import load_correlations, save_correlations

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sipjcdd",
                                description="Superimposed-pilot iterative receiver simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte-Carlo sweep and write a CSV report")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)

    ds = sub.add_parser("gen-dataset", help="export estimator training data")
    ds.add_argument("--config", required=True)
    ds.add_argument("--n", type=int, required=True)
    ds.add_argument("--out", required=True)
    ds.add_argument("--speed-kmh", type=float, default=None,
                    help="override the first sweep speed")
    ds.add_argument("--snr-db", type=float, default=None,
                    help="override the first sweep SNR")

    ev = sub.add_parser("eval-estimator", help="score an estimator endpoint on a dataset")
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--endpoint", default=None)
    ev.add_argument("--corr", default=None, help="correlation file for the LMMSE reference")
    ev.add_argument("--sigma-eff2", type=float, default=0.5)
    ev.add_argument("--sigma-w2", type=float, default=0.0)
    ev.add_argument("--l1", type=int, default=6)
    ev.add_argument("--l2", type=int, default=2)
    ev.add_argument("--limit", type=int, default=None)
    ev.add_argument("--timeout", type=float, default=30.0)

    ce = sub.add_parser("corr-estimate", help="estimate correlation matrices to a file")
    ce.add_argument("--config", required=True)
    ce.add_argument("--out", required=True)
    ce.add_argument("--speed-kmh", type=float, default=None,
                    help="override the configured statistics speed")
    return p


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)

    def progress(cell):
        print(f"{cell.variant} speed={cell.speed_kmh:g} snr={cell.snr_db:g} "
              f"bler={cell.bler:.4g} [{cell.status}] ({cell.wall_s:.1f}s)",
              file=sys.stderr)

    report = run_sweep(cfg, progress=progress)
    report.to_csv(args.out)
    print(f"wrote {len(report.cells)} cells to {args.out}")
    return 0


def _cmd_gen_dataset(args) -> int:
    cfg = load_config(args.config)
    speed = args.speed_kmh if args.speed_kmh is not None else cfg.speeds_kmh[0]
    snr = args.snr_db if args.snr_db is not None else cfg.snr_db[0]
    export_dataset(cfg, args.n, args.out, speed_kmh=speed, snr_db=snr)
    print(f"wrote {args.n} records to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    corr = load_correlations(args.corr) if args.corr else None
    result = eval_estimator(args.dataset, args.endpoint, corr=corr,
                            sigma_eff2=args.sigma_eff2,
                            despread_cfg=DespreadConfig(L1=args.l1, L2=args.l2),
                            timeout=args.timeout, sigma_w2=args.sigma_w2,
                            limit=args.limit)
    for name in sorted(result):
        print(f"mse_{name} {result[name]:.8g}")
    return 0


def _cmd_corr(args) -> int:
    cfg = load_config(args.config)
    if args.speed_kmh is not None:
        speed = args.speed_kmh
    elif cfg.stats_speed_kmh is not None:
        speed = cfg.stats_speed_kmh
    else:
        speed = cfg.speeds_kmh[0]
    corr = correlations_for(cfg, speed)
    save_correlations(args.out, corr)
    print(f"wrote correlations ({corr.sample_count} samples at {speed:g} km/h) to {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    handlers = {"simulate": _cmd_simulate, "gen-dataset": _cmd_gen_dataset,
                "eval-estimator": _cmd_eval, "corr-estimate": _cmd_corr}
    try:
        return handlers[args.command](args)
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
