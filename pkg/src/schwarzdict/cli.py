"""Command-line entry point.

Subcommands: offline, online, classical, reference, bench-svd,
bench-projection, bench-error-vs-k, bench-timing.  Exit codes: 0 success,
2 configuration error, 3 solver failure, 4 non-convergence under --strict.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench
from .config import ConfigError, load_config
from .dictionary import DictionaryError
from .elliptic import SolverFailure

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_NOCONV = 4


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="schwarzdict",
                                 description="Schwarz iteration with offline-learned "
                                             "local solution dictionaries")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, dict_arg=False):
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", default=None, help="output directory (default: config value)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="offline build workers")
        if dict_arg:
            p.add_argument("--dict", required=True, help="dictionary file from 'offline'")

    common(sub.add_parser("offline", help="build and save the local dictionaries"))
    p_on = sub.add_parser("online", help="reduced Schwarz run from a dictionary file")
    common(p_on, dict_arg=True)
    p_on.add_argument("--k", type=int, default=None, help="neighbor count (default: first in config)")
    p_on.add_argument("--strict", action="store_true", help="exit 4 if not converged")
    p_cl = sub.add_parser("classical", help="classical Schwarz baseline run")
    common(p_cl)
    p_cl.add_argument("--eps", type=float, default=None, help="scale parameter (default: first in config)")
    p_cl.add_argument("--strict", action="store_true", help="exit 4 if not converged")
    common(sub.add_parser("reference", help="monolithic fine-grid reference solves"))
    common(sub.add_parser("bench-svd", help="singular-value decay of the centered dictionary"))
    common(sub.add_parser("bench-projection", help="projection error of the reference vs k"))
    common(sub.add_parser("bench-error-vs-k", help="online error over the (k, eps, buffer) grid"))
    common(sub.add_parser("bench-timing", help="reduced vs classical wall-time comparison"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        out = Path(args.out) if args.out else Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)

        if args.command == "offline":
            for p in bench.cmd_offline(cfg, out, threads=args.threads):
                print(p)
        elif args.command == "online":
            (sol, rep), report = bench.cmd_online(cfg, args.dict, out, k=args.k)
            print(sol)
            print(rep)
            print(f"iterations={report.iterations} converged={report.converged}")
            if args.strict and not report.converged:
                return EXIT_NOCONV
        elif args.command == "classical":
            (sol, rep), report = bench.cmd_classical(cfg, out, eps=args.eps)
            print(sol)
            print(rep)
            print(f"iterations={report.iterations} converged={report.converged}")
            if args.strict and not report.converged:
                return EXIT_NOCONV
        elif args.command == "reference":
            for p in bench.cmd_reference(cfg, out):
                print(p)
        elif args.command == "bench-svd":
            print(bench.bench_svd(cfg, out, threads=args.threads))
        elif args.command == "bench-projection":
            print(bench.bench_projection(cfg, out, threads=args.threads))
        elif args.command == "bench-error-vs-k":
            print(bench.bench_error_vs_k(cfg, out, threads=args.threads))
        elif args.command == "bench-timing":
            print(bench.bench_timing(cfg, out, threads=args.threads))
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, DictionaryError) as err:
        print(f"solver error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
