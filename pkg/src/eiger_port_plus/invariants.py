"""Runtime monitors for protocol invariants and the NOC structural properties."""

import logging
from collections import Counter
from collections.abc import Hashable
from dataclasses import fields

from .client import Client
from .core import CommitTs, Key, TxnId
from .exceptions import InvariantViolation
from .messages import Message, ReadReply, ReadReq
from .server import Commit, Prep, Server

logger = logging.getLogger(__name__)


class InvariantMonitor:
    """Checks timestamp, pending-set and monotonicity invariants after each step."""

    def __init__(self) -> None:
        self._server_clock: dict[int, int] = {}
        self._server_lst: dict[int, int] = {}
        self._client_scalars: dict[int, tuple[int, int]] = {}
        self._client_lst: dict[tuple[int, Hashable], int] = {}
        self.checks = 0

    def check_server(self, s: Server, keys: list[Key] | None = None) -> None:
        """Check one partition after it handled a message.

        Raises:
            InvariantViolation: If a server invariant does not hold
        """
        self.checks += 1
        if s.svr_clock < self._server_clock.get(s.server_id, 0):
            raise InvariantViolation("clock-monotonic", f"server {s.server_id} clock went back")
        self._server_clock[s.server_id] = s.svr_clock
        if s.lst > s.svr_clock:
            raise InvariantViolation(
                "lst-below-clock", f"server {s.server_id}: lst {s.lst} > clock {s.svr_clock}"
            )
        if s.lst > s.local_safe_time():
            raise InvariantViolation(
                "lst-below-pending",
                f"server {s.server_id}: lst {s.lst} passes pending prepare {s.local_safe_time()}",
            )
        if s.lst < self._server_lst.get(s.server_id, 0):
            raise InvariantViolation("lst-monotonic", f"server {s.server_id} lst went back")
        self._server_lst[s.server_id] = s.lst
        for k in keys if keys is not None else sorted(s.keys):
            expected = Counter(v.pend_t for v in s.store[k].values() if isinstance(v, Prep))
            if expected != s.pending_wtxns[k]:
                raise InvariantViolation(
                    "pending-matches-prepared", f"server {s.server_id} key {k!r}: {dict(s.pending_wtxns[k])}"
                )

    def check_commit(self, s: Server, k: Key, t: TxnId) -> None:
        """Check a version just committed at ``k`` against its prepare timestamp.

        Raises:
            InvariantViolation: If the commit timestamp is below the prepare timestamp
        """
        self.checks += 1
        version = s.store[k].get(t)
        if not isinstance(version, Commit):
            raise InvariantViolation("commit-after-prepare", f"{t} is not committed at key {k!r}")
        if version.cts.clock < version.prep_t:
            raise InvariantViolation(
                "commit-after-prepare",
                f"{t} committed {k!r} at {version.cts.clock} below its prepare timestamp {version.prep_t}",
            )

    def check_client(self, c: Client, keys: list[Key] | None = None) -> None:
        """Check one client after it handled an event.

        Raises:
            InvariantViolation: If a client invariant does not hold
        """
        self.checks += 1
        prev_gst, prev_clock = self._client_scalars.get(c.cl_id, (0, 0))
        if c.gst < prev_gst:
            raise InvariantViolation("gst-monotonic", f"client {c.cl_id} gst {prev_gst} -> {c.gst}")
        if c.cl_clock < prev_clock:
            raise InvariantViolation("clock-monotonic", f"client {c.cl_id} clock went back")
        self._client_scalars[c.cl_id] = (c.gst, c.cl_clock)
        partitions = {c.partition_of[k] for k in keys} if keys is not None else set(c.lst_map)
        for p in partitions:
            prev = self._client_lst.get((c.cl_id, p), 0)
            if c.lst_map[p] < prev:
                raise InvariantViolation(
                    "lst-map-monotonic", f"client {c.cl_id} partition {p!r}: {prev} -> {c.lst_map[p]}"
                )
            self._client_lst[(c.cl_id, p)] = c.lst_map[p]
            if c.gst > c.lst_map[p]:
                raise InvariantViolation(
                    "gst-below-lst-map", f"client {c.cl_id} gst {c.gst} > lst_map[{p!r}] {c.lst_map[p]}"
                )

    def check_gst(self, c: Client) -> None:
        """Check a freshly computed gst against every tracked partition."""
        self.checks += 1
        floor = min(c.lst_map.values())
        if c.gst > floor:
            raise InvariantViolation(
                "gst-below-lst-map", f"client {c.cl_id} gst {c.gst} exceeds min lst_map {floor}"
            )

    def check_quiescent(self, k: Key, server: Server, clients: list[Client]) -> None:
        """Check the timestamp chain for ``k`` when no message touching it is in flight.

        Raises:
            InvariantViolation: If gst <= lst_map <= lst <= clock fails for some client
        """
        self.checks += 1
        lst = server.lst
        if lst > server.svr_clock:
            raise InvariantViolation("timestamp-chain", f"key {k!r}: lst {lst} > clock {server.svr_clock}")
        for c in clients:
            if not (c.gst <= c.lst_of(k) <= lst):
                raise InvariantViolation(
                    "timestamp-chain",
                    f"key {k!r} client {c.cl_id}: gst {c.gst}, lst_map {c.lst_of(k)}, lst {lst}",
                )


def timestamp_field_count(msg: Message) -> int:
    """Number of Lamport-timestamp fields a message carries, counting a CommitTs as one."""
    count = 0
    for f in fields(msg):  # type: ignore[arg-type]
        if f.name in msg.TIMESTAMP_FIELDS:
            value = getattr(msg, f.name)
            if not isinstance(value, int | CommitTs):
                raise InvariantViolation(
                    "constant-metadata", f"{type(msg).__name__}.{f.name} is not a single timestamp"
                )
            count += 1
    return count


class NocMonitor:
    """Checks one-round, non-blocking and constant-metadata behaviour of read-only transactions."""

    def __init__(self) -> None:
        self.field_counts: dict[str, int] = {}
        self.read_requests: dict[TxnId, Counter[Key]] = {}
        self.read_replies: dict[TxnId, Counter[Key]] = {}
        self.read_keys: dict[TxnId, frozenset[Key]] = {}
        self.messages = 0

    def on_message(self, msg: Message) -> None:
        self.messages += 1
        count = timestamp_field_count(msg)
        name = type(msg).__name__
        expected = self.field_counts.setdefault(name, count)
        if count != expected:
            raise InvariantViolation(
                "constant-metadata", f"{name} carried {count} timestamps, earlier {expected}"
            )

    def on_read_invoke(self, txn: TxnId, reqs: list[ReadReq]) -> None:
        keys = [r.k for r in reqs]
        self.read_keys[txn] = frozenset(keys)
        self.read_requests[txn] = Counter(keys)
        self.read_replies[txn] = Counter()
        if len(set(keys)) != len(keys):
            raise InvariantViolation("one-round", f"{txn} sent two requests for one key")

    def on_read_served(self, req: ReadReq, reply: object) -> None:
        if not isinstance(reply, ReadReply):
            raise InvariantViolation("non-blocking", f"read of {req.k!r} by {req.reader} was not answered")
        self.read_replies[req.reader][req.k] += 1

    def on_read_done(self, txn: TxnId) -> None:
        keys = self.read_keys.pop(txn)
        sent = self.read_requests.pop(txn)
        answered = self.read_replies.pop(txn)
        for k in keys:
            if sent[k] != 1 or answered[k] != 1:
                raise InvariantViolation(
                    "one-round", f"{txn} key {k!r}: {sent[k]} requests, {answered[k]} replies"
                )
