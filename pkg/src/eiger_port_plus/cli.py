"""Command-line entry point: run, check, explore, demo-divergence and bench."""

import argparse
import asyncio
import dataclasses
import json
import logging
import sys
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .bench import bench_compare, metrics_table
from .checker import Verdict, check_all, check_convergence, check_sessions, check_tccv
from .config_manager import ConfigManager
from .core import Mutation, Variant
from .demo import divergence_demo, render
from .exceptions import (
    DeadlockError,
    EigerPortError,
    ExplorationLimitError,
    InvariantViolation,
    MalformedHistoryError,
    UsageError,
)
from .explorer import check_explored, explore
from .history import History, event_to_dict
from .simulator import Metrics, SimConfig, run
from .utils import calculate_file_hash, format_error_response, validate_file_path
from .workload import exploration_workload, key_names

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_VIOLATION = 2
EXIT_MALFORMED = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML configuration file")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--out", help="Output path")
    parser.add_argument("--variant", choices=[v.value for v in Variant], help="Server read rule")
    parser.add_argument("--format", choices=["text", "json"], default="text", help="Output format")


def _workload_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--clients", type=int, help="Number of clients")
    parser.add_argument("--partitions", type=int, help="Number of partitions")
    parser.add_argument("--keys", type=int, help="Keyspace size")
    parser.add_argument("--txns", type=int, help="Transactions per client")
    parser.add_argument("--theta", type=float, help="Zipf skew")
    parser.add_argument("--read-proportion", type=float, help="Fraction of read-only transactions")
    parser.add_argument("--mutation", choices=[m.value for m in Mutation], help="Inject a protocol fault")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eiger-port-plus", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="Simulate a seeded workload and check its history")
    _common(p)
    _workload_flags(p)
    p.add_argument("--repeat", type=int, default=1, help="Run seeds seed..seed+N-1")
    p.add_argument("--workers", type=int, default=4, help="Threads for --repeat")

    p = sub.add_parser("check", help="Check history files")
    _common(p)
    p.add_argument("files", nargs="+", help="History files")
    p.add_argument("--no-minimize", action="store_true", help="Report the unminimized witness")

    p = sub.add_parser("explore", help="Exhaustively explore a small configuration")
    _common(p)
    p.add_argument("--clients", type=int, help="Number of clients")
    p.add_argument("--keys", type=int, help="Keyspace size")
    p.add_argument("--txns", type=int, help="Transactions per client")
    p.add_argument("--mutation", choices=[m.value for m in Mutation], help="Inject a protocol fault")
    p.add_argument("--max-states", type=int, help="Cap on distinct states")

    p = sub.add_parser("demo-divergence", help="Run the diverging-views schedule under both read rules")
    _common(p)

    p = sub.add_parser("bench", help="Compare the two read rules on one workload")
    _common(p)
    _workload_flags(p)
    return parser


def _sim_config(config: ConfigManager, args: argparse.Namespace) -> SimConfig:
    return SimConfig.from_config(
        config,
        clients=args.clients,
        partitions=args.partitions,
        keys=args.keys,
        txns_per_client=args.txns,
        theta=args.theta,
        read_proportion=args.read_proportion,
        seed=args.seed,
        variant=args.variant,
        mutation=args.mutation,
    )


def _print_verdicts(label: str, verdicts: list[Verdict], fmt: str) -> None:
    if fmt == "json":
        print(
            json.dumps(
                {
                    "source": label,
                    "verdicts": [
                        {
                            "check": v.check,
                            "passed": v.passed,
                            "guard": v.guard,
                            "txn": str(v.txn) if v.txn else None,
                            "detail": v.detail,
                            "witness": [event_to_dict(e) for e in v.witness],
                        }
                        for v in verdicts
                    ],
                }
            )
        )
        return
    for v in verdicts:
        print(f"{label}: {v.summary()}")
        for e in v.witness:
            print(f"    {json.dumps(event_to_dict(e), sort_keys=True)}")


def _output_path(out: str, seed: int, repeat: int) -> Path:
    path = Path(out)
    if repeat == 1:
        return path
    return path.with_name(f"{path.stem}-{seed}{path.suffix}")


def cmd_run(config: ConfigManager, args: argparse.Namespace) -> int:
    if args.repeat < 1:
        raise UsageError("--repeat must be at least 1")
    base = _sim_config(config, args)
    base.validate()
    seeds = range(base.seed, base.seed + args.repeat)

    def one(seed: int) -> tuple[int, Metrics, list[Verdict]]:
        cfg = dataclasses.replace(base, seed=seed)
        result = run(cfg)
        verdicts = check_all(result.history, cfg.init_value)
        if args.out:
            path = result.history.dump(_output_path(args.out, seed, args.repeat))
            logger.info(f"History sha256 {calculate_file_hash(path)}")
        return seed, result.metrics, verdicts

    if args.repeat == 1:
        outcomes = [one(base.seed)]
    else:
        with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
            outcomes = list(pool.map(one, seeds))

    failed = 0
    for seed, metrics, verdicts in outcomes:
        if args.repeat == 1:
            print(metrics_table({base.variant: metrics}, args.format))
        if not all(v.passed for v in verdicts):
            failed += 1
            _print_verdicts(f"seed {seed}", [v for v in verdicts if not v.passed], args.format)
    if args.repeat > 1:
        print(f"{len(outcomes) - failed}/{len(outcomes)} seeds passed every check")
    return EXIT_VIOLATION if failed else EXIT_OK


async def _load_one(path: str) -> History:
    return await History.aload(validate_file_path(path))


async def _load_all(files: Sequence[str]) -> list[History | BaseException]:
    return await asyncio.gather(*(_load_one(f) for f in files), return_exceptions=True)


def cmd_check(config: ConfigManager, args: argparse.Namespace) -> int:
    loaded = asyncio.run(_load_all(args.files))
    init_value = config.get("history.init_value", 0)
    code = EXIT_OK
    for path, h in zip(args.files, loaded):
        if isinstance(h, BaseException):
            print(f"{path}: {format_error_response(h)}", file=sys.stderr)
            code = EXIT_MALFORMED
            continue
        try:
            verdicts = [
                check_tccv(h, init_value, minimize=not args.no_minimize),
                check_convergence(h),
                check_sessions(h),
            ]
        except MalformedHistoryError as e:
            print(f"{path}: {format_error_response(e)}", file=sys.stderr)
            code = EXIT_MALFORMED
            continue
        _print_verdicts(path, verdicts, args.format)
        if not all(v.passed for v in verdicts) and code == EXIT_OK:
            code = EXIT_VIOLATION
    return code


def cmd_explore(config: ConfigManager, args: argparse.Namespace) -> int:
    clients = args.clients or int(config.get("explore.clients", 2))
    keys = args.keys or int(config.get("explore.keys", 2))
    txns = args.txns if args.txns is not None else int(config.get("explore.txns_per_client", 2))
    max_states = args.max_states or int(config.get("explore.max_states", 2_000_000))
    variant = Variant(args.variant or config.get("simulation.variant", Variant.EIGER_PORT_PLUS.value))
    mutation = Mutation(args.mutation) if args.mutation else None
    init_value = config.get("history.init_value", 0)

    result = explore(
        exploration_workload(clients, keys, txns),
        key_names(keys),
        variant=variant,
        mutation=mutation,
        init_value=init_value,
        max_states=max_states,
    )
    report = check_explored(result, init_value)
    summary = {
        "states": result.states,
        "schedules": result.schedules,
        "histories": len(result.histories),
        "failures": len(report.failures),
        "passed": report.passed,
    }
    if args.format == "json":
        print(json.dumps(summary))
    else:
        print(
            f"explored {summary['states']} states, {summary['schedules']} schedules, "
            f"{summary['histories']} distinct histories: {'PASS' if report.passed else 'FAIL'}"
        )
    if report.failures:
        _print_verdicts("explore", report.failures[:1], args.format)
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_demo(config: ConfigManager, args: argparse.Namespace) -> int:
    outcomes = divergence_demo(config.get("history.init_value", 0))
    if args.format == "json":
        print(
            json.dumps(
                {
                    v.value: {
                        "final_reads": o.final_reads,
                        "verdicts": {x.check: x.summary() for x in o.verdicts},
                    }
                    for v, o in outcomes.items()
                }
            )
        )
    else:
        print(render(outcomes))
    if args.out:
        out = Path(args.out)
        for variant, outcome in outcomes.items():
            outcome.history.dump(out / f"{variant.value}.jsonl")
    return EXIT_OK


def cmd_bench(config: ConfigManager, args: argparse.Namespace) -> int:
    results = bench_compare(_sim_config(config, args))
    table = metrics_table({v: r.metrics for v, r in results.items()}, args.format)
    print(table)
    if args.out:
        Path(args.out).write_text(table + "\n", encoding="utf-8")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "check": cmd_check,
    "explore": cmd_explore,
    "demo-divergence": cmd_demo,
    "bench": cmd_bench,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Main entry point.

    Returns:
        0 on success, 2 on a consistency violation, 3 on a malformed
        history, 64 on a usage error and 1 on any other failure
    """
    try:
        args = build_parser().parse_args(argv)
        config = ConfigManager(args.config)
        validation = config.validate()
        for warning in validation["warnings"]:
            logger.warning(warning)
        if not validation["valid"]:
            raise UsageError("; ".join(validation["errors"]))
        return COMMANDS[args.command](config, args)
    except UsageError as e:
        print(format_error_response(e), file=sys.stderr)
        return EXIT_USAGE
    except MalformedHistoryError as e:
        logger.error(format_error_response(e))
        print(format_error_response(e), file=sys.stderr)
        return EXIT_MALFORMED
    except InvariantViolation as e:
        logger.error(format_error_response(e))
        print(format_error_response(e), file=sys.stderr)
        return EXIT_VIOLATION
    except (DeadlockError, ExplorationLimitError, EigerPortError) as e:
        logger.error(format_error_response(e))
        print(format_error_response(e), file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
