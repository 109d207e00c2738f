"""Simulated network: message envelopes, per-message delays and the event queue."""

import heapq
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any

from .core import ClientId, Key
from .exceptions import UsageError
from .messages import Message, Request
from .utils import stable_hash

logger = logging.getLogger(__name__)

DELAY_MODELS = ("fixed", "uniform")


@dataclass(frozen=True)
class Envelope:
    """A message in flight, tagged with the client and transaction it belongs to."""

    client: ClientId
    sn: int
    msg: Message

    @property
    def to_server(self) -> bool:
        return isinstance(self.msg, Request)

    @property
    def key(self) -> Key:
        return self.msg.k

    @property
    def kind(self) -> str:
        return type(self.msg).__name__


@dataclass(frozen=True)
class DelayModel:
    """Network delay in ticks.

    ``uniform`` draws from ``[low, high]`` using a hash of the seed and the
    message identity, so the same message gets the same delay under either
    read rule.
    """

    model: str = "uniform"
    low: int = 1
    high: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.model not in DELAY_MODELS:
            raise UsageError(f"unknown delay model {self.model!r}")
        if self.low < 0 or self.high < self.low:
            raise UsageError(f"invalid delay range [{self.low}, {self.high}]")

    def delay(self, env: Envelope) -> int:
        if self.model == "fixed":
            return self.low
        h = stable_hash(self.seed, env.client, env.sn, env.key, env.kind)
        return self.low + h % (self.high - self.low + 1)


@dataclass(order=True)
class _Scheduled:
    time: int
    seq: int
    payload: Any = field(compare=False)


class EventQueue:
    """Deterministic priority queue ordered by (time, insertion sequence)."""

    def __init__(self) -> None:
        self._heap: list[_Scheduled] = []
        self._seq = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: int, payload: Any) -> None:
        heapq.heappush(self._heap, _Scheduled(time, self._seq, payload))
        self._seq += 1

    def pop(self) -> tuple[int, Any]:
        item = heapq.heappop(self._heap)
        return item.time, item.payload


class Network:
    """Reliable, unordered delivery of envelopes with per-message delays."""

    def __init__(self, delays: DelayModel):
        self.delays = delays
        self.queue = EventQueue()
        self.in_flight: Counter[Key] = Counter()
        self.sent = 0

    def send(self, now: int, env: Envelope, extra: int = 0) -> None:
        self.queue.push(now + extra + self.delays.delay(env), env)
        self.in_flight[env.key] += 1
        self.sent += 1

    def next(self) -> tuple[int, Any]:
        time, payload = self.queue.pop()
        if isinstance(payload, Envelope):
            self.in_flight[payload.key] -= 1
            if not self.in_flight[payload.key]:
                del self.in_flight[payload.key]
        return time, payload

    def quiet(self, k: Key) -> bool:
        return k not in self.in_flight

    def __len__(self) -> int:
        return len(self.queue)
