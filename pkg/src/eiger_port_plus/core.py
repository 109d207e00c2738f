"""Identifiers, logical time and the commit-timestamp order shared by every component."""

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

ClientId = int
LamportTs = int
Key = str
Value = str | int

# Writer of every key's initial version. Sorts below every real client.
INIT_CLIENT: ClientId = -1


class TxnId(NamedTuple):
    """Transaction identifier: issuing client and its session sequence number."""

    client: ClientId
    sn: int

    def __str__(self) -> str:
        return f"t{self.client}.{self.sn}"


class CommitTs(NamedTuple):
    """Commit timestamp; tuple order is the lexicographic (clock, client) order."""

    clock: LamportTs
    client: ClientId

    def __str__(self) -> str:
        return f"({self.clock},{self.client})"


INIT_TXN = TxnId(INIT_CLIENT, 0)
INIT_CTS = CommitTs(0, INIT_CLIENT)


def commit_ts_cmp(a: CommitTs, b: CommitTs) -> int:
    """Compare two commit timestamps.

    Args:
        a: Left timestamp
        b: Right timestamp

    Returns:
        -1, 0 or 1 as ``a`` sorts before, equal to or after ``b``
    """
    if a.clock != b.clock:
        return -1 if a.clock < b.clock else 1
    if a.client != b.client:
        return -1 if a.client < b.client else 1
    return 0


def clock_advance(local: LamportTs, received: LamportTs) -> LamportTs:
    """Advance a Lamport clock past both the local reading and a received one."""
    return max(local, received) + 1


def so_precedes(t1: TxnId, t2: TxnId) -> bool:
    """Return True iff ``t1`` comes before ``t2`` in the same client session."""
    return t1.client == t2.client and t1.sn < t2.sn


@dataclass(frozen=True)
class Provenance:
    """Decoded origin of a value written by the workload generator."""

    client: ClientId
    sn: int
    key: Key

    @property
    def txn(self) -> TxnId:
        return TxnId(self.client, self.sn)


def encode_value(client: ClientId, sn: int, key: Key) -> str:
    """Build a self-describing value naming the transaction and key that wrote it."""
    return f"v:{client}:{sn}:{key}"


def decode_value(value: Value) -> Provenance | None:
    """Decode a value built by :func:`encode_value`; other values decode to None."""
    if not isinstance(value, str) or not value.startswith("v:"):
        return None
    parts = value.split(":", 3)
    if len(parts) != 4:
        return None
    try:
        return Provenance(int(parts[1]), int(parts[2]), parts[3])
    except ValueError:
        return None


class Variant(str, Enum):
    """Server read rule."""

    EIGER_PORT_PLUS = "eiger-port-plus"
    EIGER_PORT_READ_RULE = "eiger-port-read-rule"


class Mutation(str, Enum):
    """Deliberate protocol faults used to confirm the checkers can see them."""

    CTS_MIN_PREPARE = "cts-min-prepare"
    SKIP_RYW = "skip-ryw"
    GST_MAX = "gst-max"
    LST_IGNORES_PENDING = "lst-ignores-pending"
    READ_LATEST = "read-latest"
