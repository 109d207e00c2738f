"""Partition state machine: multi-versioned keys, PORT reads, prepare and commit."""

import logging
from collections import Counter
from dataclasses import dataclass, field

from .core import (
    INIT_CTS,
    INIT_TXN,
    CommitTs,
    Key,
    LamportTs,
    Mutation,
    TxnId,
    Value,
    Variant,
    clock_advance,
)
from .exceptions import ProtocolError
from .messages import (
    CommitReply,
    CommitReq,
    PrepReply,
    PrepReq,
    ReadReply,
    ReadReq,
    Reply,
    Request,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Reg:
    """A read transaction was served at this key."""

    def snapshot(self) -> tuple:
        return ("reg",)


@dataclass(frozen=True)
class Prep:
    pend_t: LamportTs
    prep_t: LamportTs
    val: Value

    def snapshot(self) -> tuple:
        return ("prep", self.pend_t, self.prep_t, self.val)


@dataclass
class Commit:
    """A committed version.

    ``pend_t`` and ``prep_t`` are kept from the prepare phase; ``readermap``
    maps each read transaction served this version to the (lst, clk) pair it
    was handed.
    """

    cts: CommitTs
    lst_at_commit: LamportTs
    clk_at_commit: LamportTs
    val: Value
    pend_t: LamportTs = 0
    prep_t: LamportTs = 0
    readermap: dict[TxnId, tuple[LamportTs, LamportTs]] = field(default_factory=dict)

    def snapshot(self) -> tuple:
        return (
            "commit",
            self.cts,
            self.lst_at_commit,
            self.clk_at_commit,
            self.val,
            self.pend_t,
            self.prep_t,
            tuple(sorted(self.readermap.items())),
        )


VerState = Reg | Prep | Commit


@dataclass(frozen=True)
class ReadResult:
    val: Value
    writer: TxnId
    lst: LamportTs
    clk: LamportTs
    versions_scanned: int


def conflicts(a: Commit, b: Commit) -> bool:
    """Two committed versions conflict when each was prepared before the other committed here."""
    return a.pend_t < b.clk_at_commit and b.pend_t < a.clk_at_commit


class Server:
    """One partition owning a set of keys.

    Every key starts with the committed init version written by ``INIT_TXN``.
    The partition keeps one local safe time covering every key it owns: no
    prepared but uncommitted write on any of them can commit at or below it.
    """

    def __init__(
        self,
        server_id: int,
        keys: list[Key] | set[Key],
        init_value: Value = 0,
        variant: Variant = Variant.EIGER_PORT_PLUS,
        mutation: Mutation | None = None,
    ):
        """Initialize the partition.

        Args:
            server_id: Partition identifier
            keys: Keys owned by this partition
            init_value: Value of every key's initial version
            variant: Read rule applied to ReadReq messages
            mutation: Optional injected fault
        """
        self.server_id = server_id
        self.keys = frozenset(keys)
        self.variant = Variant(variant)
        self.mutation = Mutation(mutation) if mutation else None
        self.svr_clock: LamportTs = 0
        self.lst: LamportTs = 0
        self.pending_wtxns: dict[Key, Counter[LamportTs]] = {k: Counter() for k in self.keys}
        # pending_wtxns summed over every key.
        self._pending: Counter[LamportTs] = Counter()
        self.store: dict[Key, dict[TxnId, VerState]] = {
            k: {INIT_TXN: Commit(INIT_CTS, 0, 0, init_value)} for k in self.keys
        }
        # Committed writers per key, ascending by CommitTs.
        self._committed: dict[Key, list[TxnId]] = {k: [INIT_TXN] for k in self.keys}

    def _check_key(self, k: Key) -> None:
        if k not in self.keys:
            raise ProtocolError(f"server {self.server_id} does not own key {k!r}")

    def committed_desc(self, k: Key) -> list[tuple[TxnId, Commit]]:
        """Committed versions of ``k`` in decreasing CommitTs order."""
        versions = self.store[k]
        return [(t, versions[t]) for t in reversed(self._committed[k])]  # type: ignore[misc]

    def local_safe_time(self) -> LamportTs:
        """Minimum pending prepare timestamp over the partition, or the clock if nothing is pending."""
        return min(self._pending) if self._pending else self.svr_clock

    def _record_read(
        self, k: Key, reader: TxnId, writer: TxnId, version: Commit, scanned: int
    ) -> ReadResult:
        lst = self.lst
        version.readermap[reader] = (lst, self.svr_clock)
        self.store[k][reader] = Reg()
        return ReadResult(version.val, writer, lst, self.svr_clock, scanned)

    def _begin_read(self, k: Key, reader: TxnId, cl_clock: LamportTs) -> None:
        self._check_key(k)
        if reader in self.store[k]:
            raise ProtocolError(f"reader {reader} already registered at key {k!r}")
        self.svr_clock = clock_advance(self.svr_clock, cl_clock)

    def register_read(
        self, k: Key, rts: LamportTs, reader: TxnId, cl_clock: LamportTs
    ) -> ReadResult:
        """Serve a read at ``rts``, preferring the reader's own newer writes.

        Args:
            k: Key to read
            rts: Read timestamp (the client's global safe time)
            reader: Reading transaction
            cl_clock: Client clock carried by the request

        Returns:
            Selected value and writer, the partition lst and the advanced clock

        Raises:
            ProtocolError: If the key is not owned here or the reader is already registered
        """
        self._begin_read(k, reader, cl_clock)
        ryw = self.mutation is not Mutation.SKIP_RYW
        latest = self.mutation is Mutation.READ_LATEST
        for scanned, (writer, version) in enumerate(self.committed_desc(k), start=1):
            if latest or version.cts.clock <= rts:
                return self._record_read(k, reader, writer, version, scanned)
            if ryw and writer.client == reader.client:
                return self._record_read(k, reader, writer, version, scanned)
        raise AssertionError(f"no committed version of {k!r} at or below {rts}")

    def read_eiger_port(
        self, k: Key, rts: LamportTs, reader: TxnId, cl_clock: LamportTs
    ) -> ReadResult:
        """Serve a read with the older backward-scan rule.

        Below ``rts`` the scan skips the reader's own versions that conflict
        with another committed version of the key.
        """
        self._begin_read(k, reader, cl_clock)
        desc = self.committed_desc(k)
        for scanned, (writer, version) in enumerate(desc, start=1):
            own = writer.client == reader.client
            if version.cts.clock > rts:
                if own and self.mutation is not Mutation.SKIP_RYW:
                    return self._record_read(k, reader, writer, version, scanned)
                continue
            if not own or not any(
                other is not version and conflicts(version, other) for _, other in desc
            ):
                return self._record_read(k, reader, writer, version, scanned)
        raise AssertionError(f"no readable version of {k!r} at or below {rts}")

    def prepare_write(self, k: Key, v: Value, t: TxnId, cl_clock: LamportTs) -> LamportTs:
        """Prepare ``t``'s write of ``k`` and return its prepare timestamp.

        Raises:
            ProtocolError: If the key is not owned here or ``t`` already touched ``k``
        """
        self._check_key(k)
        if t in self.store[k]:
            raise ProtocolError(f"duplicate prepare of {t} at key {k!r}")
        pend_t = self.svr_clock
        self.svr_clock = clock_advance(self.svr_clock, cl_clock)
        self.pending_wtxns[k][pend_t] += 1
        self._pending[pend_t] += 1
        self.store[k][t] = Prep(pend_t, self.svr_clock, v)
        return self.svr_clock

    def commit_write(
        self, k: Key, t: TxnId, commit_ts: CommitTs, cl_clock: LamportTs
    ) -> LamportTs:
        """Commit a prepared write and return the partition's new local safe time.

        Raises:
            ProtocolError: If ``t`` has no prepared version of ``k``
        """
        self._check_key(k)
        prepared = self.store[k].get(t)
        if not isinstance(prepared, Prep):
            raise ProtocolError(f"commit of {t} at key {k!r} without a prepared version")
        self.svr_clock = clock_advance(self.svr_clock, cl_clock)
        for pending in (self.pending_wtxns[k], self._pending):
            pending[prepared.pend_t] -= 1
            if pending[prepared.pend_t] == 0:
                del pending[prepared.pend_t]
        if self.mutation is Mutation.LST_IGNORES_PENDING:
            self.lst = self.svr_clock
        else:
            self.lst = self.local_safe_time()
        self.store[k][t] = Commit(
            commit_ts,
            self.lst,
            self.svr_clock,
            prepared.val,
            pend_t=prepared.pend_t,
            prep_t=prepared.prep_t,
        )
        self._insert_committed(k, t, commit_ts)
        return self.lst

    def _insert_committed(self, k: Key, t: TxnId, cts: CommitTs) -> None:
        order = self._committed[k]
        versions = self.store[k]
        i = len(order)
        while i > 0 and versions[order[i - 1]].cts > cts:  # type: ignore[union-attr]
            i -= 1
        if i > 0 and versions[order[i - 1]].cts == cts:  # type: ignore[union-attr]
            raise ProtocolError(f"duplicate commit timestamp {cts} at key {k!r}")
        order.insert(i, t)

    def handle(self, msg: Request) -> Reply:
        """Apply one request and produce its reply in the same step."""
        if isinstance(msg, ReadReq):
            if self.variant is Variant.EIGER_PORT_READ_RULE:
                r = self.read_eiger_port(msg.k, msg.rts, msg.reader, msg.cl_clock)
            else:
                r = self.register_read(msg.k, msg.rts, msg.reader, msg.cl_clock)
            return ReadReply(msg.k, r.val, r.writer, r.lst, r.clk, r.versions_scanned)
        if isinstance(msg, PrepReq):
            prep_t = self.prepare_write(msg.k, msg.v, msg.t, msg.cl_clock)
            return PrepReply(msg.k, msg.t, prep_t, self.svr_clock)
        if isinstance(msg, CommitReq):
            lst = self.commit_write(msg.k, msg.t, msg.cts, msg.cl_clock)
            return CommitReply(msg.k, msg.t, lst, self.svr_clock)
        raise ProtocolError(f"server {self.server_id} cannot handle {type(msg).__name__}")

    def version_count(self, k: Key) -> int:
        return len(self._committed[k])

    def snapshot(self) -> tuple:
        """Hashable canonical form of the partition state."""
        return (
            self.server_id,
            self.svr_clock,
            self.lst,
            tuple(
                (k, tuple(sorted((t, s.snapshot()) for t, s in self.store[k].items())))
                for k in sorted(self.keys)
            ),
        )

