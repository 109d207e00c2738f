"""Workload generation: Zipfian key choice and the read/write transaction mix."""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import ClientId, Key, Value, encode_value
from .exceptions import UsageError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReadTxn:
    keys: tuple[Key, ...]


@dataclass(frozen=True)
class WriteTxn:
    kv: tuple[tuple[Key, Value], ...]

    @property
    def kv_map(self) -> dict[Key, Value]:
        return dict(self.kv)


Txn = ReadTxn | WriteTxn
Workload = dict[ClientId, list[Txn]]


@dataclass(frozen=True)
class WorkloadSpec:
    """Shape of a generated workload.

    Attributes:
        keys: Keyspace size
        theta: Zipf skew; 0 is uniform
        read_proportion: Probability that a transaction is read-only
        read_keys_per_txn: Distinct keys per read-only transaction
        write_keys_per_txn: Distinct keys per write-only transaction
        txns_per_client: Transactions each client issues
        clients: Number of clients
        seed: Generator seed
    """

    keys: int = 10000
    theta: float = 0.8
    read_proportion: float = 0.9
    read_keys_per_txn: int = 4
    write_keys_per_txn: int = 2
    txns_per_client: int = 1000
    clients: int = 8
    seed: int = 1

    def validate(self) -> None:
        """Raise UsageError if any field is out of range."""
        if self.keys < 1 or self.clients < 1 or self.txns_per_client < 0:
            raise UsageError("keys and clients must be at least 1")
        if not 0.0 <= self.read_proportion <= 1.0:
            raise UsageError(f"read proportion {self.read_proportion} outside [0, 1]")
        if self.theta < 0:
            raise UsageError(f"zipf skew {self.theta} must be non-negative")
        for n in (self.read_keys_per_txn, self.write_keys_per_txn):
            if n < 1 or n > self.keys:
                raise UsageError(f"{n} keys per transaction does not fit a keyspace of {self.keys}")

    @property
    def keyspace(self) -> list[Key]:
        return key_names(self.keys)


def key_names(n: int) -> list[Key]:
    return [f"k{i}" for i in range(n)]


@lru_cache(maxsize=32)
def zipf_cdf(n: int, theta: float) -> np.ndarray:
    """Cumulative distribution of ranks 1..n with weights 1/i^theta."""
    weights = 1.0 / np.power(np.arange(1, n + 1, dtype=np.float64), theta)
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    return cdf


def zipf_sample(n: int, theta: float, rng: np.random.Generator, size: int | None = None) -> int | np.ndarray:
    """Draw a rank in [1, n] with probability proportional to 1/i^theta.

    Args:
        n: Keyspace size
        theta: Skew factor; 0 gives the uniform distribution
        rng: Seeded numpy generator
        size: Number of draws, or None for a single int

    Returns:
        One rank, or an array of ``size`` ranks
    """
    if n < 1 or theta < 0:
        raise UsageError(f"invalid zipf parameters n={n}, theta={theta}")
    cdf = zipf_cdf(n, float(theta))
    u = rng.random(size)
    ranks = np.minimum(np.searchsorted(cdf, u, side="right"), n - 1) + 1
    if size is None:
        return int(ranks)
    return ranks


def _distinct_keys(n: int, theta: float, count: int, rng: np.random.Generator) -> tuple[Key, ...]:
    chosen: list[int] = []
    while len(chosen) < count:
        rank = int(zipf_sample(n, theta, rng))
        if rank not in chosen:
            chosen.append(rank)
    return tuple(f"k{r - 1}" for r in sorted(chosen))


def client_workload(spec: WorkloadSpec, cl: ClientId) -> list[Txn]:
    """Transactions of one client; independent of every other client's stream."""
    rng = np.random.default_rng([spec.seed, cl])
    txns: list[Txn] = []
    for sn in range(spec.txns_per_client):
        if rng.random() < spec.read_proportion:
            txns.append(ReadTxn(_distinct_keys(spec.keys, spec.theta, spec.read_keys_per_txn, rng)))
        else:
            keys = _distinct_keys(spec.keys, spec.theta, spec.write_keys_per_txn, rng)
            txns.append(WriteTxn(tuple((k, encode_value(cl, sn, k)) for k in keys)))
    return txns


def gen_workload(spec: WorkloadSpec) -> Workload:
    """Generate per-client transaction scripts.

    Write values encode the writing client, sequence number and key, so any
    value read back can be traced to its writer.
    """
    spec.validate()
    workload = {cl: client_workload(spec, cl) for cl in range(spec.clients)}
    logger.debug(
        f"Generated {sum(len(t) for t in workload.values())} transactions for {spec.clients} clients"
    )
    return workload


def exploration_workload(clients: int, keys: int, txns_per_client: int) -> Workload:
    """Small fixed workload for exhaustive exploration.

    Clients alternate between writing every key and reading every key, with
    even clients starting on a write and odd clients on a read.
    """
    keyspace = key_names(keys)
    workload: Workload = {}
    for cl in range(clients):
        txns: list[Txn] = []
        for sn in range(txns_per_client):
            if (cl + sn) % 2 == 0:
                txns.append(WriteTxn(tuple((k, encode_value(cl, sn, k)) for k in keyspace)))
            else:
                txns.append(ReadTxn(tuple(keyspace)))
        workload[cl] = txns
    return workload
