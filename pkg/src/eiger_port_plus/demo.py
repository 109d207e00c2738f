"""Three-session schedule on which the older read rule makes views diverge.

Alice, Bob and Carol share keys X and Y, one partition each. Bob's write of
Y1 is prepared early and committed late, so Alice's own later versions of Y
conflict with it. Under the older read rule her final read returns Y1, older
than the Y3 she already saw; Eiger-PORT+ returns her own Y4.
"""

import logging
from dataclasses import dataclass, field

from .checker import Verdict, check_convergence, check_sessions, check_tccv
from .core import ClientId, Key, Value, Variant
from .history import History
from .simulator import ScriptStep, scripted_run

logger = logging.getLogger(__name__)

ALICE, BOB, CAROL = 1, 2, 3
CLIENT_NAMES: dict[ClientId, str] = {ALICE: "Alice", BOB: "Bob", CAROL: "Carol"}
DEMO_KEYS: tuple[Key, ...] = ("X", "Y")

DIVERGENCE_SCRIPT: tuple[ScriptStep, ...] = (
    ("write", ALICE, {"X": "X1"}),
    ("run", ALICE),
    ("write", BOB, {"X": "X2"}),
    ("run", BOB),
    # Y1 prepared, commit held back
    ("write", BOB, {"Y": "Y1"}),
    ("deliver", BOB, "Y"),
    ("write", ALICE, {"Y": "Y2"}),
    ("run", ALICE),
    ("write", ALICE, {"Y": "Y3"}),
    ("run", ALICE),
    ("read", ALICE, ["X", "Y"]),
    ("run", ALICE),
    ("write", CAROL, {"X": "X3"}),
    ("run", CAROL),
    ("read", CAROL, ["Y"]),
    ("run", CAROL),
    ("write", ALICE, {"Y": "Y4"}),
    ("deliver", ALICE, "Y"),
    ("deliver", BOB, "Y"),
    ("deliver", ALICE, "Y"),
    ("read", BOB, ["X", "Y"]),
    ("run", BOB),
    ("write", CAROL, {"X": "X4"}),
    ("run", CAROL),
    ("write", ALICE, {"X": "X5"}),
    ("run", ALICE),
    ("read", BOB, ["X", "Y"]),
    ("run", BOB),
    ("read", ALICE, ["X", "Y"]),
    ("run", ALICE),
)


@dataclass
class DemoOutcome:
    """One variant's run of the divergence schedule."""

    variant: Variant
    history: History
    final_reads: dict[str, dict[Key, Value]] = field(default_factory=dict)
    verdicts: list[Verdict] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return all(v.passed for v in self.verdicts if v.check == "convergence")


def last_reads(h: History, names: dict[ClientId, str] = CLIENT_NAMES) -> dict[str, dict[Key, Value]]:
    """Values returned by each session's latest read-only transaction."""
    out: dict[str, dict[Key, Value]] = {}
    for r in h.reads:
        out[names.get(r.client, f"cl{r.client}")] = {k: v for k, (v, _) in sorted(r.reads.items())}
    return out


def run_divergence(variant: Variant, init_value: Value = 0) -> DemoOutcome:
    """Run the schedule under one read rule and check the resulting history."""
    h = scripted_run(
        DIVERGENCE_SCRIPT,
        DEMO_KEYS,
        CLIENT_NAMES,
        variant=variant,
        init_value=init_value,
    )
    outcome = DemoOutcome(variant, h, last_reads(h))
    outcome.verdicts = [
        check_tccv(h, init_value),
        check_convergence(h, CLIENT_NAMES),
        check_sessions(h, CLIENT_NAMES),
    ]
    logger.info(
        f"Divergence demo under {variant.value}: Alice read {outcome.final_reads.get('Alice')}, "
        f"converged={outcome.converged}"
    )
    return outcome


def divergence_demo(init_value: Value = 0) -> dict[Variant, DemoOutcome]:
    return {v: run_divergence(v, init_value) for v in (Variant.EIGER_PORT_PLUS, Variant.EIGER_PORT_READ_RULE)}


def render(outcomes: dict[Variant, DemoOutcome]) -> str:
    lines = []
    for variant, outcome in outcomes.items():
        lines.append(f"[{variant.value}]")
        for name in ("Alice", "Bob"):
            reads = outcome.final_reads.get(name, {})
            lines.append(f"  {name}: {{" + ", ".join(str(reads[k]) for k in DEMO_KEYS if k in reads) + "}")
        for verdict in outcome.verdicts:
            lines.append(f"  {verdict.summary()}")
    return "\n".join(lines)
