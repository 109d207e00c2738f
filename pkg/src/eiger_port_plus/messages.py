"""Wire schema exchanged between clients and partitions.

Each message names its Lamport-timestamp fields in ``TIMESTAMP_FIELDS``; the
count is fixed per message type, which the NOC monitor relies on.
"""

from dataclasses import dataclass
from typing import ClassVar

from .core import CommitTs, Key, LamportTs, TxnId, Value


@dataclass(frozen=True)
class ReadReq:
    k: Key
    rts: LamportTs
    reader: TxnId
    cl_clock: LamportTs

    TIMESTAMP_FIELDS: ClassVar[tuple[str, ...]] = ("rts", "cl_clock")


@dataclass(frozen=True)
class ReadReply:
    k: Key
    val: Value
    writer: TxnId
    lst: LamportTs
    clk: LamportTs
    versions_scanned: int = 1

    TIMESTAMP_FIELDS: ClassVar[tuple[str, ...]] = ("lst", "clk")


@dataclass(frozen=True)
class PrepReq:
    k: Key
    v: Value
    t: TxnId
    cl_clock: LamportTs

    TIMESTAMP_FIELDS: ClassVar[tuple[str, ...]] = ("cl_clock",)


@dataclass(frozen=True)
class PrepReply:
    k: Key
    t: TxnId
    prep_t: LamportTs
    clk: LamportTs

    TIMESTAMP_FIELDS: ClassVar[tuple[str, ...]] = ("prep_t", "clk")


@dataclass(frozen=True)
class CommitReq:
    k: Key
    t: TxnId
    cts: CommitTs
    cl_clock: LamportTs

    TIMESTAMP_FIELDS: ClassVar[tuple[str, ...]] = ("cts", "cl_clock")


@dataclass(frozen=True)
class CommitReply:
    k: Key
    t: TxnId
    lst: LamportTs
    clk: LamportTs

    TIMESTAMP_FIELDS: ClassVar[tuple[str, ...]] = ("lst", "clk")


Request = ReadReq | PrepReq | CommitReq
Reply = ReadReply | PrepReply | CommitReply
Message = Request | Reply
