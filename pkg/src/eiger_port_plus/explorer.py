"""Bounded exhaustive exploration of message interleavings."""

import copy
import logging
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field

from .checker import Verdict, check_convergence, check_sessions, check_tccv
from .core import Key, Mutation, Value, Variant
from .exceptions import DeadlockError, ExplorationLimitError
from .history import History
from .network import Envelope
from .simulator import Cluster
from .workload import Workload

logger = logging.getLogger(__name__)


@dataclass
class ExploreResult:
    """Distinct maximal histories plus schedule and state counts."""

    histories: list[History] = field(default_factory=list)
    schedules: int = 0
    states: int = 0


class _State:
    def __init__(self, cluster: Cluster, workload: Workload):
        self.cluster = cluster
        self.in_flight: list[Envelope] = []
        self.cursor = {cl: 0 for cl in workload}

    def fingerprint(self) -> tuple:
        return (
            self.cluster.fingerprint(),
            frozenset(Counter(self.in_flight).items()),
            tuple(sorted(self.cursor.items())),
        )

    def moves(self, workload: Workload) -> list[tuple[str, object]]:
        out: list[tuple[str, object]] = [("deliver", env) for env in dict.fromkeys(self.in_flight)]
        for cl, i in sorted(self.cursor.items()):
            if i < len(workload[cl]) and self.cluster.clients[cl].idle:
                out.append(("invoke", cl))
        return out

    def apply(self, move: tuple[str, object], workload: Workload) -> None:
        kind, arg = move
        if kind == "invoke":
            cl = arg
            assert isinstance(cl, int)
            self.in_flight.extend(self.cluster.invoke(cl, workload[cl][self.cursor[cl]]))
            self.cursor[cl] += 1
            return
        assert isinstance(arg, Envelope)
        self.in_flight.remove(arg)
        self.in_flight.extend(self.cluster.deliver(arg).outgoing)
        if all(env.key != arg.key for env in self.in_flight):
            self.cluster.check_quiescent([arg.key])

    def finished(self, workload: Workload) -> bool:
        return not self.in_flight and all(i == len(workload[cl]) for cl, i in self.cursor.items())


def explore(
    workload: Workload,
    keys: Sequence[Key],
    *,
    partition_of: dict[Key, int] | None = None,
    variant: Variant = Variant.EIGER_PORT_PLUS,
    mutation: Mutation | None = None,
    init_value: Value = 0,
    max_states: int = 2_000_000,
    check_invariants: bool = True,
) -> ExploreResult:
    """Enumerate every interleaving of message deliveries and client invocations.

    Any in-flight message may be delivered next and any idle client may start
    its next transaction. States with equal fingerprints are explored once;
    the number of distinct schedules is counted through them.

    Args:
        workload: Per-client transactions
        keys: Keyspace
        partition_of: Key placement; one partition per key by default
        variant: Server read rule
        mutation: Optional injected protocol fault
        init_value: Value of every key's initial version
        max_states: Cap on distinct states
        check_invariants: Run the runtime monitors on every step

    Returns:
        The distinct maximal histories with schedule and state counts

    Raises:
        ExplorationLimitError: If more than ``max_states`` states are reached
        DeadlockError: If some state has no move while work remains
    """
    if partition_of is None:
        partition_of = {k: i for i, k in enumerate(keys)}
    root = _State(
        Cluster(keys, workload.keys(), partition_of, variant, mutation, init_value, check_invariants),
        workload,
    )
    memo: dict[tuple, int] = {}
    histories: dict[tuple, History] = {}

    def count(state: _State) -> int:
        fp = state.fingerprint()
        cached = memo.get(fp)
        if cached is not None:
            return cached
        if len(memo) >= max_states:
            raise ExplorationLimitError(len(memo), max_states)
        moves = state.moves(workload)
        if not moves:
            if not state.finished(workload):
                raise DeadlockError("no enabled move while work remains", state.cluster.dump())
            histories.setdefault(state.cluster.history.canonical(), state.cluster.history)
            memo[fp] = 1
            return 1
        total = 0
        for move in moves:
            child = copy.deepcopy(state)
            child.apply(move, workload)
            total += count(child)
        memo[fp] = total
        if len(memo) % 100_000 == 0:
            logger.info(f"Explored {len(memo)} states")
        return total

    schedules = count(root)
    result = ExploreResult(list(histories.values()), schedules, len(memo))
    logger.info(
        f"Exploration finished: {result.states} states, {result.schedules} schedules, "
        f"{len(result.histories)} distinct histories"
    )
    return result


@dataclass
class ExploreReport:
    result: ExploreResult
    failures: list[Verdict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def check_explored(result: ExploreResult, init_value: Value = 0) -> ExploreReport:
    """Run every history check on every explored history."""
    report = ExploreReport(result)
    for h in result.histories:
        for verdict in (
            check_tccv(h, init_value, minimize=False),
            check_convergence(h),
            check_sessions(h),
        ):
            if not verdict.passed:
                report.failures.append(verdict)
    return report
