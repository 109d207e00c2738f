"""History checker.

Reconstructs the abstract store and client views from a protocol history and
replays every commit through the abstract model's commit guards. Write
commits replay in commit-timestamp order, which removes commits that finished
out of timestamp order; each read commit replays right after the last write
it can see.
"""

import bisect
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

from .abstract_model import (
    INIT_INDICES,
    AbstractConfig,
    AbstractKVS,
    AbstractVersion,
    Fingerprint,
    Op,
    Relation,
    Rejection,
    View,
    commit_step,
    predecessors,
    view_get,
    vis_tx,
    xview_step,
)
from .core import INIT_CTS, INIT_TXN, ClientId, CommitTs, Key, LamportTs, TxnId, Value
from .exceptions import MalformedHistoryError
from .history import History, HistoryEvent, ReadCommit, ViewExtend, WriteCommit

logger = logging.getLogger(__name__)

MINIMIZE_MAX_CHECKS = 1000
MINIMIZE_MAX_EVENTS = 400


@dataclass
class DerivedRelations:
    """History variables derived from a log.

    ``cts_order`` only lists keys that were written; every other key's order
    is just the init transaction.
    """

    wtxn_cts: dict[TxnId, CommitTs] = field(default_factory=dict)
    rtxn_rts: dict[TxnId, LamportTs] = field(default_factory=dict)
    cts_order: dict[Key, list[TxnId]] = field(default_factory=dict)
    so: Relation = field(default_factory=set)
    wr: Relation = field(default_factory=set)
    writes: dict[TxnId, WriteCommit] = field(default_factory=dict)
    reads: dict[TxnId, ReadCommit] = field(default_factory=dict)
    inverted_commits: int = 0
    _positions: dict[tuple[Key, TxnId], int] = field(default_factory=dict, repr=False)

    def order(self, k: Key) -> list[TxnId]:
        return self.cts_order.get(k, [INIT_TXN])

    def position(self, k: Key, t: TxnId) -> int:
        """Index of ``t``'s version of ``k`` in commit-timestamp order."""
        if t == INIT_TXN:
            return 0
        return self._positions[(k, t)]

    def keys(self) -> set[Key]:
        touched = set(self.cts_order)
        for r in self.reads.values():
            touched.update(r.reads)
        return touched

    def cts_of(self, t: TxnId) -> CommitTs:
        return INIT_CTS if t == INIT_TXN else self.wtxn_cts[t]


def ingest(h: History) -> DerivedRelations:
    """Derive commit timestamps, read timestamps, per-key version order, SO and WR.

    Raises:
        MalformedHistoryError: On a reused transaction ID, a non-increasing
            sequence number, a duplicate commit timestamp or a read whose
            writer never committed that key
    """
    rel = DerivedRelations()
    last_txn: dict[ClientId, TxnId] = {}
    owner_of_cts: dict[CommitTs, TxnId] = {}
    max_cts = INIT_CTS

    for e in h:
        if isinstance(e, ViewExtend):
            continue
        t = e.txn
        if t in rel.writes or t in rel.reads or t == INIT_TXN:
            raise MalformedHistoryError(f"transaction ID {t} committed twice")
        prev = last_txn.get(t.client)
        if prev is not None:
            if t.sn <= prev.sn:
                raise MalformedHistoryError(
                    f"client {t.client} committed sn {t.sn} after sn {prev.sn}"
                )
            rel.so.add((prev, t))
        last_txn[t.client] = t

        if isinstance(e, WriteCommit):
            if e.cts in owner_of_cts:
                raise MalformedHistoryError(
                    f"commit timestamp {e.cts} used by {owner_of_cts[e.cts]} and {t}"
                )
            if e.cts.client != t.client:
                raise MalformedHistoryError(f"{t} committed with another client's timestamp {e.cts}")
            if not e.writes:
                raise MalformedHistoryError(f"{t} committed an empty write set")
            owner_of_cts[e.cts] = t
            rel.wtxn_cts[t] = e.cts
            rel.writes[t] = e
            if e.cts < max_cts:
                rel.inverted_commits += 1
            max_cts = max(max_cts, e.cts)
            for k in e.writes:
                order = rel.cts_order.setdefault(k, [INIT_TXN])
                bisect.insort(order, t, key=rel.cts_of)
        else:
            if not e.reads:
                raise MalformedHistoryError(f"{t} committed an empty read set")
            rel.rtxn_rts[t] = e.rts
            rel.reads[t] = e
            for _, writer in e.reads.values():
                rel.wr.add((writer, t))

    for r in rel.reads.values():
        for k, (_, writer) in r.reads.items():
            if writer != INIT_TXN and k not in getattr(rel.writes.get(writer), "writes", {}):
                raise MalformedHistoryError(f"{r.txn} read {k!r} from {writer}, which never wrote it")

    for k, order in rel.cts_order.items():
        for i, t in enumerate(order):
            rel._positions[(k, t)] = i
    if rel.inverted_commits:
        logger.debug(f"History has {rel.inverted_commits} inverted commits")
    return rel


def abstract_kvs_of(
    rel: DerivedRelations,
    h: History | None = None,
    init_value: Value = 0,
    keyspace: Iterable[Key] | None = None,
) -> AbstractKVS:
    """Rebuild the abstract store: versions in commit-timestamp order with their readers.

    Raises:
        MalformedHistoryError: If a transaction in the version order has no write record
    """
    K = AbstractKVS(set(keyspace or ()) | rel.keys(), init_value)
    for k in sorted(rel.cts_order):
        for t in rel.cts_order[k][1:]:
            w = rel.writes.get(t)
            if w is None or k not in w.writes:
                raise MalformedHistoryError(f"{t} is ordered on {k!r} without a write record")
            K.append(k, AbstractVersion(w.writes[k], t))
    for r in rel.reads.values():
        for k, (_, writer) in r.reads.items():
            K.add_reader(k, rel.position(k, writer), r.txn)
    return K


def views_of(
    rel: DerivedRelations,
    h: History | None,
    cl: ClientId,
    gst: LamportTs,
    before_sn: int | None = None,
) -> View:
    """View of client ``cl`` reading at ``gst``.

    Each key sees the versions whose commit clock is at most ``gst`` plus the
    client's own writes (those before ``before_sn`` when given).
    """
    u: View = {}
    for k, order in rel.cts_order.items():
        indices = {
            i
            for i, t in enumerate(order)
            if i == 0
            or rel.wtxn_cts[t].clock <= gst
            or (t.client == cl and (before_sn is None or t.sn < before_sn))
        }
        if indices != INIT_INDICES:
            u[k] = frozenset(indices)
    return u


@dataclass(frozen=True)
class Verdict:
    """Outcome of one check; a failure carries the violated guard and a witness."""

    check: str
    passed: bool
    guard: str | None = None
    txn: TxnId | None = None
    detail: str = ""
    witness: tuple[HistoryEvent, ...] = ()

    def __bool__(self) -> bool:
        return self.passed

    def summary(self) -> str:
        if self.passed:
            return f"{self.check}: PASS"
        return f"{self.check}: FAIL [{self.guard}] {self.txn}: {self.detail}"


@dataclass
class ReplayResult:
    verdict: Verdict
    config: AbstractConfig
    inverted_commits: int = 0


class _ClientViews:
    """Per-client read views maintained incrementally as gst grows."""

    def __init__(self, rel: DerivedRelations, ordered_writes: list[WriteCommit]):
        self.rel = rel
        self.ordered = ordered_writes
        self.cursor: dict[ClientId, int] = {}
        self.views: dict[ClientId, dict[Key, frozenset[int]]] = {}

    def _add(self, u: dict[Key, frozenset[int]], w: WriteCommit) -> None:
        for k in w.writes:
            u[k] = view_get(u, k) | {self.rel.position(k, w.txn)}

    def at(self, cl: ClientId, gst: LamportTs) -> View:
        u = self.views.setdefault(cl, {})
        i = self.cursor.get(cl, 0)
        while i < len(self.ordered) and self.ordered[i].cts.clock <= gst:
            self._add(u, self.ordered[i])
            i += 1
        self.cursor[cl] = i
        return dict(u)

    def own_write(self, cl: ClientId, w: WriteCommit) -> None:
        self._add(self.views.setdefault(cl, {}), w)


def _read_slots(
    rel: DerivedRelations, ordered: list[WriteCommit]
) -> dict[int, list[ReadCommit]]:
    clocks = [w.cts.clock for w in ordered]
    index = {w.txn: i for i, w in enumerate(ordered)}
    last_own: dict[ClientId, list[tuple[int, int]]] = {}
    for w in sorted(rel.writes.values(), key=lambda w: w.txn):
        last_own.setdefault(w.txn.client, []).append((w.txn.sn, index[w.txn]))
    slots: dict[int, list[ReadCommit]] = {}
    for r in rel.reads.values():
        slot = bisect.bisect_right(clocks, r.rts) - 1
        own = last_own.get(r.txn.client, [])
        j = bisect.bisect_left(own, (r.txn.sn, -1)) - 1
        if j >= 0:
            slot = max(slot, own[j][1])
        slots.setdefault(slot, []).append(r)
    for reads in slots.values():
        reads.sort(key=lambda r: r.seq)
    return slots


def _pair_view_extends(h: History) -> dict[TxnId, ViewExtend]:
    pending: dict[ClientId, ViewExtend] = {}
    paired = {}
    for e in h:
        if isinstance(e, ViewExtend):
            pending[e.cl] = e
        elif isinstance(e, ReadCommit) and e.client in pending:
            paired[e.txn] = pending.pop(e.client)
    return paired


def replay(
    h: History,
    init_value: Value = 0,
    keyspace: Iterable[Key] | None = None,
    clients: Iterable[ClientId] = (),
) -> ReplayResult:
    """Replay every commit through the abstract commit guards.

    Returns:
        The verdict and the abstract configuration the replay reached

    Raises:
        MalformedHistoryError: If the history is malformed
    """
    rel = ingest(h)
    ordered = sorted(rel.writes.values(), key=lambda w: w.cts)
    slots = _read_slots(rel, ordered)
    extends = _pair_view_extends(h)
    preds = predecessors(rel.so, rel.wr)
    cfg = AbstractConfig.initial(
        set(keyspace or ()) | rel.keys(), set(clients) | set(h.clients()), init_value
    )
    tracker = _ClientViews(rel, ordered)
    known_closed: dict[ClientId, set[TxnId]] = {}

    def fail(rej: Rejection, t: TxnId) -> ReplayResult:
        logger.debug(f"Replay rejected {t}: {rej.guard}: {rej.detail}")
        verdict = Verdict("tccv", False, rej.guard, t, rej.detail, _txn_events(h, rel, t))
        return ReplayResult(verdict, cfg, rel.inverted_commits)

    def commit(t: TxnId, u: View, u_after: View, F: Fingerprint) -> Rejection | None:
        closed_set = known_closed.setdefault(t.client, set())
        out = commit_step(
            cfg, t.client, t.sn, u, u_after, F, rel.so, rel.wr,
            in_place=True, known_closed=closed_set, preds=preds,
        )
        if isinstance(out, Rejection):
            return out
        closed_set.update(vis_tx(cfg.kvs, u))
        return None

    for slot in range(-1, len(ordered)):
        if slot >= 0:
            w = ordered[slot]
            u = dict(cfg.view(w.client))
            new_positions = {k: rel.position(k, w.txn) for k in w.writes}
            u_after = {**u, **{k: view_get(u, k) | {i} for k, i in new_positions.items()}}
            rej = commit(w.txn, u, u_after, {(k, Op.W): v for k, v in w.writes.items()})
            if rej is not None:
                return fail(rej, w.txn)
            tracker.own_write(w.client, w)
        for r in slots.get(slot, ()):
            u = tracker.at(r.client, r.rts)
            if r.txn in extends:
                out = xview_step(cfg, r.client, u, in_place=True)
                if isinstance(out, Rejection):
                    return fail(out, r.txn)
            F: Fingerprint = {(k, Op.R): v for k, (v, _) in r.reads.items()}
            rej = commit(r.txn, u, u, F)
            if rej is not None:
                return fail(rej, r.txn)

    return ReplayResult(Verdict("tccv", True), cfg, rel.inverted_commits)


def _txn_events(h: History, rel: DerivedRelations, t: TxnId) -> tuple[HistoryEvent, ...]:
    """The failing transaction, its session predecessors and the writers it read."""
    related = {t}
    r = rel.reads.get(t)
    if r is not None:
        related.update(w for _, w in r.reads.values())
    return tuple(
        e
        for e in h
        if (not isinstance(e, ViewExtend) and (e.txn in related or e.txn.client == t.client and e.txn.sn < t.sn))
        or (isinstance(e, ViewExtend) and e.cl == t.client)
    )


def _still_fails(h: History, guard: str | None, init_value: Value) -> bool:
    try:
        verdict = replay(h, init_value).verdict
    except MalformedHistoryError:
        return False
    return not verdict.passed and verdict.guard == guard


def minimize_witness(h: History, verdict: Verdict, init_value: Value = 0) -> tuple[HistoryEvent, ...]:
    """Greedily drop events while the same guard keeps failing.

    Bounded by ``MINIMIZE_MAX_CHECKS`` re-checks; larger histories keep the
    unminimized witness.
    """
    if verdict.passed or len(h) > MINIMIZE_MAX_EVENTS:
        return verdict.witness
    keep = {e.seq for e in verdict.witness if getattr(e, "txn", None) == verdict.txn}
    dropped: set[int] = set()
    checks = 0
    for e in reversed(h.events):
        if e.seq in keep:
            continue
        if checks >= MINIMIZE_MAX_CHECKS:
            break
        checks += 1
        if _still_fails(h.without(dropped | {e.seq}), verdict.guard, init_value):
            dropped.add(e.seq)
    return tuple(e for e in h if e.seq not in dropped)


def check_tccv(h: History, init_value: Value = 0, minimize: bool = True) -> Verdict:
    """Check that every commit satisfies the abstract commit guards when replayed.

    Raises:
        MalformedHistoryError: If the history is malformed
    """
    verdict = replay(h, init_value).verdict
    if not verdict.passed and minimize:
        witness = minimize_witness(h, verdict, init_value)
        verdict = Verdict(verdict.check, False, verdict.guard, verdict.txn, verdict.detail, witness)
    if verdict.passed:
        logger.debug(f"check_tccv passed on {len(h)} events")
    else:
        logger.warning(verdict.summary())
    return verdict


def _label(rel: DerivedRelations, k: Key, t: TxnId) -> str:
    if t == INIT_TXN:
        return f"{k}0"
    return str(rel.writes[t].writes[k])


def _name(cl: ClientId, names: Mapping[ClientId, str] | None) -> str:
    return (names or {}).get(cl, f"cl{cl}")


def _session_reads(rel: DerivedRelations) -> dict[ClientId, list[ReadCommit]]:
    per_client: dict[ClientId, list[ReadCommit]] = {}
    for r in sorted(rel.reads.values(), key=lambda r: r.txn):
        per_client.setdefault(r.client, []).append(r)
    return per_client


def _own_latest_write(rel: DerivedRelations, cl: ClientId, k: Key, before_sn: int) -> TxnId | None:
    latest = None
    for t in rel.order(k)[1:]:
        if t.client == cl and t.sn < before_sn:
            latest = t
    return latest


def _regression(
    rel: DerivedRelations,
    check: str,
    guard: str,
    names: Mapping[ClientId, str] | None,
) -> Verdict | None:
    for cl, reads in sorted(_session_reads(rel).items()):
        last: dict[Key, tuple[TxnId, ReadCommit]] = {}
        for r in reads:
            for k, (_, writer) in sorted(r.reads.items()):
                if k in last:
                    prev_writer, prev_read = last[k]
                    if rel.position(k, writer) < rel.position(k, prev_writer):
                        involved = {prev_writer, writer}
                        own = _own_latest_write(rel, cl, k, r.txn.sn)
                        if own is not None:
                            involved.add(own)
                        ordered = sorted(involved, key=lambda t: rel.position(k, t))
                        detail = (
                            f"{_name(cl, names)}:({_label(rel, k, prev_writer)} then "
                            f"{_label(rel, k, writer)}) vs cts order "
                            + " < ".join(_label(rel, k, t) for t in ordered)
                        )
                        witness = (prev_read, r) + tuple(rel.writes[t] for t in ordered if t in rel.writes)
                        return Verdict(check, False, guard, r.txn, detail, witness)
                last[k] = (writer, r)
    return None


def check_convergence(h: History, client_names: Mapping[ClientId, str] | None = None) -> Verdict:
    """Check every session observes each key's versions in commit-timestamp order."""
    rel = ingest(h)
    verdict = _regression(rel, "convergence", "convergent-order", client_names)
    if verdict is None:
        return Verdict("convergence", True)
    logger.warning(verdict.summary())
    return verdict


def check_sessions(h: History, client_names: Mapping[ClientId, str] | None = None) -> Verdict:
    """Check read-your-writes and monotonic reads for every session."""
    rel = ingest(h)
    for cl, reads in sorted(_session_reads(rel).items()):
        for r in reads:
            for k, (v, writer) in sorted(r.reads.items()):
                own = _own_latest_write(rel, cl, k, r.txn.sn)
                if own is not None and rel.position(k, writer) < rel.position(k, own):
                    detail = (
                        f"{_name(cl, client_names)} read {k}={v!r} after writing "
                        f"{_label(rel, k, own)}"
                    )
                    verdict = Verdict("sessions", False, "read-your-writes", r.txn, detail, (rel.writes[own], r))
                    logger.warning(verdict.summary())
                    return verdict
    verdict = _regression(rel, "sessions", "monotonic-reads", client_names)
    if verdict is not None:
        logger.warning(verdict.summary())
        return verdict
    return Verdict("sessions", True)


def check_all(h: History, init_value: Value = 0, client_names: Mapping[ClientId, str] | None = None) -> list[Verdict]:
    """Run every history check."""
    return [
        check_tccv(h, init_value),
        check_convergence(h, client_names),
        check_sessions(h, client_names),
    ]
