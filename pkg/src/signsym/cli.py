"""Command line entry point: ``signsym {pretrain,finetune,attack,report}``.

Exit codes: 0 success, 2 configuration error, 3 data-format error.
``SIGNSYM_NUM_THREADS`` caps the BLAS thread pool.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigError, DataFormatError
from .harness import ExperimentConfig, emit_svg_plot, read_csv, run_pipeline

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
THREADS_ENV = "SIGNSYM_NUM_THREADS"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="signsym", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in [
        ("pretrain", "pretrain the backbone"),
        ("finetune", "attach a fresh head and fine-tune with every requested rule"),
        ("attack", "run the attack sweep and write results.csv / results.svg"),
        ("report", "re-render results.svg and print a summary from results.csv"),
    ]:
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", help="key = value experiment file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir", default="runs")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _cap_threads():
    n = os.environ.get(THREADS_ENV)
    if not n:
        return None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(n))


def _report(out_dir: Path) -> int:
    path = out_dir / "results.csv"
    if not path.exists():
        raise ConfigError(f"{path} not found; run `signsym attack` first")
    records = read_csv(path)
    emit_svg_plot(records, out_dir / "results.svg")
    print(f"{'rule':6} {'attack':9} {'epsilon':>8} {'clean':>7} {'robust':>7}")
    for r in records:
        print(f"{r.rule:6} {r.attack:9} {r.epsilon:8g} {r.clean:7.3f} {r.robust:7.3f}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = Path(args.out_dir)
    limiter = _cap_threads()
    try:
        if args.command == "report":
            return _report(out_dir)
        if args.config:
            cfg = ExperimentConfig.from_file(args.config, seed=args.seed)
        else:
            cfg = ExperimentConfig(**({"seed": args.seed} if args.seed is not None else {}))
        out_dir.mkdir(parents=True, exist_ok=True)
        stages = {"pretrain": ("pretrain",), "finetune": ("pretrain", "finetune"),
                  "attack": ("pretrain", "finetune", "attack")}[args.command]
        records = run_pipeline(cfg, out_dir, stages)
        if records:
            print(f"wrote {len(records)} records to {out_dir / 'results.csv'}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
