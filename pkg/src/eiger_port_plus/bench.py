"""Side-by-side comparison of the two server read rules."""

import dataclasses
import json
import logging
from collections.abc import Sequence

from .core import Variant
from .simulator import Metrics, RunResult, SimConfig, run
from .workload import gen_workload

logger = logging.getLogger(__name__)

DEFAULT_VARIANTS = (Variant.EIGER_PORT_PLUS, Variant.EIGER_PORT_READ_RULE)


def bench_compare(
    cfg: SimConfig, variants: Sequence[Variant] = DEFAULT_VARIANTS
) -> dict[Variant, RunResult]:
    """Run the same workload and delay seed under each read rule.

    Only ``cfg.variant`` changes between runs; the per-client scripts are
    generated once and shared.

    Args:
        cfg: Simulation parameters; its ``variant`` is ignored
        variants: Read rules to compare

    Returns:
        Run result per variant, in the order given
    """
    cfg.validate()
    workload = gen_workload(cfg.workload_spec())
    results: dict[Variant, RunResult] = {}
    for variant in variants:
        results[variant] = run(dataclasses.replace(cfg, variant=variant), workload)
        m = results[variant].metrics
        logger.info(
            f"bench {variant.value}: throughput={m.throughput:.2f} "
            f"scanned_per_read={m.scanned_per_read:.3f}"
        )
    return results


def metrics_table(metrics: dict[Variant, Metrics], fmt: str = "text") -> str:
    """Render per-variant metrics as an aligned text table or as JSON."""
    if fmt == "json":
        return json.dumps({v.value: m.as_dict() for v, m in metrics.items()}, indent=2)

    header = ("variant", "committed", "ticks", "tput/ktick", "lat mean", "lat p50", "lat p99", "scan/read")
    rows = [header]
    for variant, m in metrics.items():
        lat = m.latency_summary()
        rows.append(
            (
                variant.value,
                str(m.committed),
                str(m.ticks),
                f"{m.throughput:.2f}",
                f"{lat['mean']:.2f}",
                f"{lat['p50']:.1f}",
                f"{lat['p99']:.1f}",
                f"{m.scanned_per_read:.3f}",
            )
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = [
        "  ".join(
            cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(r, widths))
        )
        for r in rows
    ]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
