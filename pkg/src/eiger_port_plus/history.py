"""History log: the event records clients emit and their JSON-lines file format."""

import json
import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import aiofiles

from .core import ClientId, CommitTs, Key, LamportTs, TxnId, Value
from .exceptions import MalformedHistoryError

logger = logging.getLogger(__name__)

HISTORY_FORMAT = "epp-history"
HISTORY_VERSION = 1


@dataclass(frozen=True)
class ViewExtend:
    cl: ClientId
    gst: LamportTs
    seq: int = 0
    tick: int = 0

    @property
    def client(self) -> ClientId:
        return self.cl


@dataclass(frozen=True)
class ReadCommit:
    txn: TxnId
    rts: LamportTs
    reads: dict[Key, tuple[Value, TxnId]] = field(default_factory=dict)
    seq: int = 0
    tick: int = 0

    @property
    def client(self) -> ClientId:
        return self.txn.client


@dataclass(frozen=True)
class WriteCommit:
    txn: TxnId
    cts: CommitTs
    writes: dict[Key, Value] = field(default_factory=dict)
    seq: int = 0
    tick: int = 0

    @property
    def client(self) -> ClientId:
        return self.txn.client


HistoryEvent = ViewExtend | ReadCommit | WriteCommit


def event_to_dict(event: HistoryEvent) -> dict[str, Any]:
    """Convert an event to its JSON object form."""
    base: dict[str, Any] = {"type": type(event).__name__, "seq": event.seq, "tick": event.tick}
    if isinstance(event, ViewExtend):
        base.update(cl=event.cl, gst=event.gst)
    elif isinstance(event, ReadCommit):
        base.update(
            txn=list(event.txn),
            rts=event.rts,
            reads={k: {"val": v, "writer": list(w)} for k, (v, w) in sorted(event.reads.items())},
        )
    else:
        base.update(txn=list(event.txn), cts=list(event.cts), writes=dict(sorted(event.writes.items())))
    return base


def _txn(raw: Any) -> TxnId:
    client, sn = raw
    return TxnId(int(client), int(sn))


def event_from_dict(raw: dict[str, Any]) -> HistoryEvent:
    """Parse one JSON object into an event.

    Raises:
        MalformedHistoryError: If the object does not match the event schema
    """
    try:
        kind = raw["type"]
        seq, tick = int(raw["seq"]), int(raw["tick"])
        if kind == "ViewExtend":
            return ViewExtend(int(raw["cl"]), int(raw["gst"]), seq, tick)
        if kind == "ReadCommit":
            reads = {k: (r["val"], _txn(r["writer"])) for k, r in raw["reads"].items()}
            return ReadCommit(_txn(raw["txn"]), int(raw["rts"]), reads, seq, tick)
        if kind == "WriteCommit":
            clock, client = raw["cts"]
            cts = CommitTs(int(clock), int(client))
            return WriteCommit(_txn(raw["txn"]), cts, dict(raw["writes"]), seq, tick)
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedHistoryError(f"bad event record {raw!r}: {e}") from e
    raise MalformedHistoryError(f"unknown event type {kind!r}")


def _event_key(event: HistoryEvent) -> tuple:
    if isinstance(event, ViewExtend):
        return ("V", event.gst)
    if isinstance(event, ReadCommit):
        return ("R", event.txn, event.rts, tuple(sorted(event.reads.items())))
    return ("W", event.txn, event.cts, tuple(sorted(event.writes.items())))


class History:
    """Ordered log of protocol events.

    ``append`` stamps each event with the next global sequence number.
    """

    def __init__(self, events: Iterable[HistoryEvent] = ()):
        self.events: list[HistoryEvent] = list(events)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[HistoryEvent]:
        return iter(self.events)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, History) and self.events == other.events

    def append(self, event: HistoryEvent, tick: int = 0) -> HistoryEvent:
        stamped = replace(event, seq=len(self.events), tick=tick)
        self.events.append(stamped)
        return stamped

    @property
    def reads(self) -> list[ReadCommit]:
        return [e for e in self.events if isinstance(e, ReadCommit)]

    @property
    def writes(self) -> list[WriteCommit]:
        return [e for e in self.events if isinstance(e, WriteCommit)]

    def clients(self) -> list[ClientId]:
        return sorted({e.client for e in self.events})

    def without(self, seqs: set[int]) -> "History":
        """Copy of this history with the given events dropped."""
        return History(e for e in self.events if e.seq not in seqs)

    def canonical(self) -> tuple:
        """Per-client event sequences without sequence numbers or ticks.

        Two schedules that commit the same transactions with the same
        outcomes, in a different global interleaving, share this form.
        """
        per_client: dict[ClientId, list[tuple]] = {}
        for e in self.events:
            per_client.setdefault(e.client, []).append(_event_key(e))
        return tuple((cl, tuple(evs)) for cl, evs in sorted(per_client.items()))

    def to_lines(self) -> list[str]:
        header = json.dumps({"format": HISTORY_FORMAT, "version": HISTORY_VERSION}, sort_keys=True)
        return [header] + [
            json.dumps(event_to_dict(e), sort_keys=True, separators=(",", ":")) for e in self.events
        ]

    def to_jsonl(self) -> str:
        return "\n".join(self.to_lines()) + "\n"

    @classmethod
    def from_lines(cls, lines: Iterable[str], source: str = "<history>") -> "History":
        """Parse a JSON-lines history, header first.

        Raises:
            MalformedHistoryError: On a missing or unsupported header or an undecodable line
        """
        it = (line for line in lines if line.strip())
        try:
            header = json.loads(next(it))
        except StopIteration:
            raise MalformedHistoryError(f"{source}: empty history file")
        except json.JSONDecodeError as e:
            raise MalformedHistoryError(f"{source}: bad header line: {e}")
        if not isinstance(header, dict) or header.get("format") != HISTORY_FORMAT:
            raise MalformedHistoryError(f"{source}: not an {HISTORY_FORMAT} file")
        if header.get("version") != HISTORY_VERSION:
            raise MalformedHistoryError(
                f"{source}: unsupported history version {header.get('version')!r}"
            )
        events = []
        for lineno, line in enumerate(it, start=2):
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedHistoryError(f"{source}:{lineno}: undecodable line: {e}")
            if not isinstance(raw, dict):
                raise MalformedHistoryError(f"{source}:{lineno}: event is not an object")
            events.append(event_from_dict(raw))
        return cls(events)

    def dump(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl(), encoding="utf-8")
        logger.info(f"Wrote {len(self.events)} events to {path}")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "History":
        path = Path(path)
        with open(path, encoding="utf-8") as f:
            return cls.from_lines(f, source=str(path))

    @classmethod
    async def aload(cls, path: str | Path) -> "History":
        """Load a history file without blocking the event loop."""
        async with aiofiles.open(path, encoding="utf-8") as f:
            text = await f.read()
        return cls.from_lines(text.splitlines(), source=str(path))
