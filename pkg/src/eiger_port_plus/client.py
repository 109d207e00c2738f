"""Client transaction coordinator for read-only and write-only transactions."""

import logging
from collections.abc import Hashable, Mapping
from dataclasses import dataclass, field

from .core import (
    ClientId,
    CommitTs,
    Key,
    LamportTs,
    Mutation,
    TxnId,
    Value,
    clock_advance,
)
from .exceptions import ProtocolError, UsageError
from .history import ReadCommit, WriteCommit
from .messages import CommitReply, CommitReq, PrepReply, PrepReq, ReadReply, ReadReq

logger = logging.getLogger(__name__)


@dataclass
class Idle:
    def snapshot(self) -> tuple:
        return ("idle",)


@dataclass
class RtxnInProg:
    start_clk: LamportTs
    keys: frozenset[Key]
    kv_map: dict[Key, tuple[Value, TxnId]] = field(default_factory=dict)

    def snapshot(self) -> tuple:
        return ("rtxn", self.start_clk, tuple(sorted(self.keys)), tuple(sorted(self.kv_map.items())))


@dataclass
class WtxnPrep:
    kv_map: dict[Key, Value]
    prep_ts: dict[Key, LamportTs] = field(default_factory=dict)

    def snapshot(self) -> tuple:
        return ("wprep", tuple(sorted(self.kv_map.items())), tuple(sorted(self.prep_ts.items())))


@dataclass
class WtxnCommit:
    cts: CommitTs
    kv_map: dict[Key, Value]
    pending_acks: set[Key]

    def snapshot(self) -> tuple:
        return (
            "wcommit",
            self.cts,
            tuple(sorted(self.kv_map.items())),
            tuple(sorted(self.pending_acks)),
        )


ClState = Idle | RtxnInProg | WtxnPrep | WtxnCommit


class Client:
    """Closed-loop client session.

    The client tracks the last local safe time it heard from every partition
    and reads at their minimum. Without a placement each key is its own
    partition. Its Lamport clock rides on every request, absorbs
    the server clock from read and commit replies, and jumps past the commit
    timestamp when a write commits.
    """

    def __init__(
        self,
        cl_id: ClientId,
        keyspace: list[Key] | set[Key],
        mutation: Mutation | None = None,
        partition_of: Mapping[Key, Hashable] | None = None,
    ):
        """Initialize the session.

        Args:
            cl_id: Client identifier
            keyspace: Every key the client may touch
            mutation: Optional injected fault
            partition_of: Partition owning each key
        """
        self.cl_id = cl_id
        self.keyspace = frozenset(keyspace)
        self.partition_of: Mapping[Key, Hashable] = (
            partition_of if partition_of is not None else {k: k for k in self.keyspace}
        )
        self.mutation = Mutation(mutation) if mutation else None
        self.cl_state: ClState = Idle()
        self.cl_sn = 0
        self.cl_clock: LamportTs = 0
        self.gst: LamportTs = 0
        self.lst_map: dict[Hashable, LamportTs] = {self.partition_of[k]: 0 for k in self.keyspace}

    @property
    def txn(self) -> TxnId:
        """The current (or next) transaction ID."""
        return TxnId(self.cl_id, self.cl_sn)

    def lst_of(self, k: Key) -> LamportTs:
        """Local safe time last heard from the partition owning ``k``."""
        return self.lst_map[self.partition_of[k]]

    def _absorb_lst(self, k: Key, lst: LamportTs) -> None:
        # Replies from one partition may arrive out of order.
        p = self.partition_of[k]
        self.lst_map[p] = max(self.lst_map[p], lst)

    @property
    def idle(self) -> bool:
        return isinstance(self.cl_state, Idle)

    def _require(self, state_type: type, action: str) -> None:
        if not isinstance(self.cl_state, state_type):
            raise ProtocolError(
                f"client {self.cl_id} cannot {action} in state {type(self.cl_state).__name__}"
            )

    def cl_read_invoke(self, keys: list[Key] | set[Key] | frozenset[Key]) -> tuple[LamportTs, list[ReadReq]]:
        """Start a read-only transaction over ``keys``.

        Returns:
            The new global safe time and one read request per key

        Raises:
            UsageError: If ``keys`` is empty or names an unknown key
            ProtocolError: If a transaction is already in progress
        """
        key_set = frozenset(keys)
        if not key_set:
            raise UsageError("read-only transaction needs at least one key")
        unknown = key_set - self.keyspace
        if unknown:
            raise UsageError(f"keys outside the keyspace: {sorted(unknown)}")
        self._require(Idle, "start a read")
        if self.mutation is Mutation.GST_MAX:
            self.gst = max(self.lst_map.values())
        else:
            self.gst = min(self.lst_map.values())
        self.cl_state = RtxnInProg(self.cl_clock, key_set)
        reqs = [ReadReq(k, self.gst, self.txn, self.cl_clock) for k in sorted(key_set)]
        return self.gst, reqs

    def cl_read(self, k: Key, reply: ReadReply) -> None:
        """Absorb the read reply for ``k``."""
        self._require(RtxnInProg, "accept a read reply")
        state = self.cl_state
        assert isinstance(state, RtxnInProg)
        if k not in state.keys or k in state.kv_map:
            raise ProtocolError(f"client {self.cl_id} has no read of {k!r} in flight")
        state.kv_map[k] = (reply.val, reply.writer)
        self._absorb_lst(k, reply.lst)
        self.cl_clock = clock_advance(self.cl_clock, reply.clk)

    @property
    def read_complete(self) -> bool:
        state = self.cl_state
        return isinstance(state, RtxnInProg) and len(state.kv_map) == len(state.keys)

    def cl_read_done(self) -> ReadCommit:
        """Commit the read-only transaction once every key has been read."""
        self._require(RtxnInProg, "finish a read")
        if not self.read_complete:
            raise ProtocolError(f"client {self.cl_id} finished a read before all keys returned")
        state = self.cl_state
        assert isinstance(state, RtxnInProg)
        record = ReadCommit(self.txn, self.gst, dict(state.kv_map))
        self.cl_sn += 1
        self.cl_state = Idle()
        return record

    def cl_write_invoke(self, kv_map: dict[Key, Value]) -> list[PrepReq]:
        """Start a write-only transaction and emit its prepare requests.

        Raises:
            UsageError: If ``kv_map`` is empty or names an unknown key
            ProtocolError: If a transaction is already in progress
        """
        if not kv_map:
            raise UsageError("write-only transaction needs at least one key")
        unknown = set(kv_map) - self.keyspace
        if unknown:
            raise UsageError(f"keys outside the keyspace: {sorted(unknown)}")
        self._require(Idle, "start a write")
        self.cl_state = WtxnPrep(dict(kv_map))
        return [PrepReq(k, v, self.txn, self.cl_clock) for k, v in sorted(kv_map.items())]

    def cl_prepared(self, k: Key, reply: PrepReply) -> None:
        """Collect a prepare acknowledgement; the server clock is not absorbed here."""
        self._require(WtxnPrep, "accept a prepare reply")
        state = self.cl_state
        assert isinstance(state, WtxnPrep)
        if k not in state.kv_map or k in state.prep_ts or reply.t != self.txn:
            raise ProtocolError(f"client {self.cl_id} has no prepare of {k!r} in flight")
        state.prep_ts[k] = reply.prep_t

    @property
    def prepared(self) -> bool:
        state = self.cl_state
        return isinstance(state, WtxnPrep) and len(state.prep_ts) == len(state.kv_map)

    def cl_write_commit(self) -> tuple[CommitTs, list[CommitReq], WriteCommit]:
        """Pick the commit timestamp and emit commit requests.

        Raises:
            ProtocolError: If some prepare acknowledgement is still missing
        """
        self._require(WtxnPrep, "commit a write")
        if not self.prepared:
            raise ProtocolError(f"client {self.cl_id} committed before every key was prepared")
        state = self.cl_state
        assert isinstance(state, WtxnPrep)
        if self.mutation is Mutation.CTS_MIN_PREPARE:
            clock = min(state.prep_ts.values())
        else:
            clock = max(state.prep_ts.values())
        cts = CommitTs(clock, self.cl_id)
        self.cl_clock = cts.clock + 1
        self.cl_state = WtxnCommit(cts, state.kv_map, set(state.kv_map))
        reqs = [CommitReq(k, self.txn, cts, self.cl_clock) for k in sorted(state.kv_map)]
        return cts, reqs, WriteCommit(self.txn, cts, dict(state.kv_map))

    def cl_write_done(self, k: Key, reply: CommitReply) -> bool:
        """Absorb a commit acknowledgement.

        Returns:
            True when this was the last acknowledgement and the client is idle again
        """
        self._require(WtxnCommit, "accept a commit reply")
        state = self.cl_state
        assert isinstance(state, WtxnCommit)
        if k not in state.pending_acks or reply.t != self.txn:
            raise ProtocolError(f"client {self.cl_id} has no commit of {k!r} in flight")
        self._absorb_lst(k, reply.lst)
        self.cl_clock = clock_advance(self.cl_clock, reply.clk)
        state.pending_acks.discard(k)
        if state.pending_acks:
            return False
        self.cl_sn += 1
        self.cl_state = Idle()
        return True

    def snapshot(self) -> tuple:
        return (
            self.cl_id,
            self.cl_state.snapshot(),
            self.cl_sn,
            self.cl_clock,
            self.gst,
            tuple(sorted((k, v) for k, v in self.lst_map.items() if v)),
        )
