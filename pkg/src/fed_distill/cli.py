"""Command-line surface: ``run``, ``cost`` and ``partition-check``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence, TextIO

import numpy as np
from dotenv import load_dotenv

from fed_distill.commcost import (
    cost_dlmh,
    cost_dlsh,
    cost_fedavg,
    cost_idlmh_incremental,
    cost_sweep,
    sweep_to_csv,
)
from fed_distill.configuration import Configuration, parse_config
from fed_distill.data import PartitionScheme, class_probability_vector, draw_classes
from fed_distill.errors import FedDistillError, InputError
from fed_distill.graph import RUNNERS
from fed_distill.metrics import RunResult, write_jsonl, write_seeds, write_summary
from fed_distill.seeding import derive_seed

logger = logging.getLogger(__name__)

LOG_LEVEL_ENV = "FED_DISTILL_LOG_LEVEL"


def configure_logging() -> None:
    """Load ``.env`` and set the root log level from ``FED_DISTILL_LOG_LEVEL``."""
    load_dotenv()
    level = os.environ.get(LOG_LEVEL_ENV, "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def run(config: Configuration, out_dir: Path) -> RunResult:
    """Run one protocol and write ``metrics.jsonl``, ``summary.csv`` and ``seeds.json``."""
    result = RUNNERS[config.protocol](config)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_jsonl(result.records, out_dir / "metrics.jsonl")
    write_summary(result.records, out_dir / "summary.csv")
    write_seeds(result.seeds, out_dir / "seeds.json")
    logger.info("run %s (%s) written to %s", result.run_id, result.protocol, out_dir)
    return result


def parse_class_range(text: str) -> list[int]:
    """Parse ``a..b`` (inclusive) into ``[a, ..., b]``."""
    lo, sep, hi = text.partition("..")
    try:
        if not sep:
            raise ValueError(text)
        start, stop = int(lo), int(hi)
    except ValueError:
        raise InputError(f"expected a class range like 1..100, got {text!r}") from None
    if start < 1 or stop < start:
        raise InputError(f"class range {text!r} must satisfy 1 <= a <= b")
    return list(range(start, stop + 1))


def cost_report(args: argparse.Namespace) -> str:
    """Render either the ``protocol,total`` table or the class sweep as CSV."""
    if args.sweep_classes:
        rows = cost_sweep(
            parse_class_range(args.sweep_classes),
            x_dist_size=args.xdist,
            logit_width=args.logit_width,
            conf_size=args.conf,
            model_params=args.params,
            rounds=args.rounds,
            m=args.clients,
        )
        return sweep_to_csv(rows)
    width = args.mask if args.client_width is None else args.client_width
    totals = [
        ("fedavg", cost_fedavg(args.params, args.params, args.rounds, args.clients)),
        ("dlsh", cost_dlsh(args.xdist, args.logit_width, args.conf, args.clients)),
        ("dlmh", cost_dlmh(args.xdist, width, args.conf, args.mask, args.clients)),
        ("idlmh", cost_idlmh_incremental(args.xdist, width, args.clients)),
    ]
    return "protocol,total\n" + "".join(f"{name},{total}\n" for name, total in totals)


def partition_check(scheme: PartitionScheme, seed: int, draws: int, out: TextIO) -> None:
    """Print each client's class-probability vector and empirical draw frequencies."""
    if draws < 1:
        raise InputError(f"draws must be >= 1, got {draws}")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["client", "row"] + [f"class_{c}" for c in range(scheme.n_classes)])
    for i in range(scheme.n_clients):
        probs = class_probability_vector(scheme, i).probs
        drawn = draw_classes(probs, draws, np.random.default_rng(derive_seed(seed, "partition", i)))
        freq = np.bincount(drawn, minlength=scheme.n_classes) / draws
        writer.writerow([i, "probability"] + [f"{p:.6f}" for p in probs])
        writer.writerow([i, "frequency"] + [f"{f:.6f}" for f in freq])


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with its three subcommands."""
    parser = argparse.ArgumentParser(prog="fed-distill", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Run one protocol from a config file.")
    p_run.add_argument("--config", type=Path, required=True)
    p_run.add_argument("--out", type=Path, required=True)

    p_cost = sub.add_parser("cost", help="Print communication costs as CSV.")
    p_cost.add_argument("--sweep-classes", default=None, help="Inclusive class-count range a..b.")
    p_cost.add_argument("--xdist", type=int, default=0, help="|X_dist|")
    p_cost.add_argument("--logit-width", type=int, default=0, help="DL-SH logit width.")
    p_cost.add_argument("--conf", type=int, default=0, help="Confidence scalars per client.")
    p_cost.add_argument("--mask", type=int, default=0, help="Mask dict size.")
    p_cost.add_argument("--client-width", type=int, default=None,
                        help="DL-MH client logit width (defaults to --mask).")
    p_cost.add_argument("--params", type=int, default=0, help="Model parameters (FedAvg).")
    p_cost.add_argument("--rounds", type=int, default=1)
    p_cost.add_argument("--clients", type=int, default=1)

    p_part = sub.add_parser("partition-check", help="Print class-probability vectors and draw frequencies.")
    p_part.add_argument("--scheme", required=True, choices=("IID", "NIID1", "NIID2", "NIID3"))
    p_part.add_argument("--clients", type=int, required=True)
    p_part.add_argument("--classes", type=int, required=True)
    p_part.add_argument("--seed", type=int, default=0)
    p_part.add_argument("--draws", type=int, default=100_000)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the ``fed-distill`` console script."""
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            run(parse_config(args.config.read_text(encoding="utf-8")), args.out)
        elif args.command == "cost":
            sys.stdout.write(cost_report(args))
        else:
            scheme = PartitionScheme(args.scheme, args.clients, args.classes)
            partition_check(scheme, args.seed, args.draws, sys.stdout)
    except (FedDistillError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
