"""Deterministic discrete-event simulation of clients and partitions."""

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from .client import Client
from .core import ClientId, Key, Mutation, TxnId, Value, Variant
from .exceptions import DeadlockError, ProtocolError, ScriptError, UsageError
from .history import History, ViewExtend
from .invariants import InvariantMonitor, NocMonitor
from .messages import CommitReply, CommitReq, PrepReply, ReadReply, ReadReq
from .network import DelayModel, Envelope, Network
from .server import Server
from .workload import ReadTxn, Txn, Workload, WorkloadSpec, WriteTxn, gen_workload, key_names

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters.

    Attributes:
        clients: Number of closed-loop clients
        partitions: Number of partitions; key ``k<i>`` lives on partition ``i % partitions``
        keys: Keyspace size
        txns_per_client: Transactions each client runs
        read_proportion: Fraction of read-only transactions
        theta: Zipf skew of key choice
        read_keys_per_txn: Keys per read-only transaction
        write_keys_per_txn: Keys per write-only transaction
        delay_model: Network delay model, "fixed" or "uniform"
        delay_low: Smallest network delay in ticks
        delay_high: Largest network delay in ticks
        seed: Seed for the workload and the delays
        variant: Server read rule
        mutation: Optional injected protocol fault
        check_invariants: Run the runtime invariant and NOC monitors
        read_base_ticks: Fixed server time charged per read
        scan_ticks_per_version: Server time charged per version a read examines
        init_value: Value of every key's initial version
    """

    clients: int = 8
    partitions: int = 8
    keys: int = 10000
    txns_per_client: int = 1000
    read_proportion: float = 0.9
    theta: float = 0.8
    read_keys_per_txn: int = 4
    write_keys_per_txn: int = 2
    delay_model: str = "uniform"
    delay_low: int = 1
    delay_high: int = 10
    seed: int = 1
    variant: Variant = Variant.EIGER_PORT_PLUS
    mutation: Mutation | None = None
    check_invariants: bool = True
    read_base_ticks: int = 0
    scan_ticks_per_version: int = 1
    init_value: Value = 0

    def validate(self) -> None:
        """Raise UsageError if any count or proportion is out of range."""
        if self.clients < 1 or self.partitions < 1 or self.keys < 1:
            raise UsageError("clients, partitions and keys must be at least 1")
        if self.read_base_ticks < 0 or self.scan_ticks_per_version < 0:
            raise UsageError("service times must be non-negative")
        self.workload_spec().validate()
        self.delays()

    def workload_spec(self) -> WorkloadSpec:
        return WorkloadSpec(
            keys=self.keys,
            theta=self.theta,
            read_proportion=self.read_proportion,
            read_keys_per_txn=min(self.read_keys_per_txn, self.keys),
            write_keys_per_txn=min(self.write_keys_per_txn, self.keys),
            txns_per_client=self.txns_per_client,
            clients=self.clients,
            seed=self.seed,
        )

    def delays(self) -> DelayModel:
        return DelayModel(self.delay_model, self.delay_low, self.delay_high, self.seed)

    @classmethod
    def from_config(cls, config: Any, **overrides: Any) -> "SimConfig":
        """Build a SimConfig from a ConfigManager, then apply non-None overrides."""
        mutation = config.get("simulation.mutation")
        values: dict[str, Any] = {
            "clients": int(config.get("simulation.clients", 8)),
            "partitions": int(config.get("simulation.partitions", 8)),
            "keys": int(config.get("workload.keys", 10000)),
            "txns_per_client": int(config.get("workload.txns_per_client", 1000)),
            "read_proportion": float(config.get("workload.read_proportion", 0.9)),
            "theta": float(config.get("workload.theta", 0.8)),
            "read_keys_per_txn": int(config.get("workload.read_keys_per_txn", 4)),
            "write_keys_per_txn": int(config.get("workload.write_keys_per_txn", 2)),
            "delay_model": config.get("simulation.delay.model", "uniform"),
            "delay_low": int(config.get("simulation.delay.low", 1)),
            "delay_high": int(config.get("simulation.delay.high", 10)),
            "seed": int(config.get("simulation.seed", 1)),
            "variant": Variant(config.get("simulation.variant", Variant.EIGER_PORT_PLUS.value)),
            "mutation": Mutation(mutation) if mutation else None,
            "check_invariants": bool(config.get("simulation.check_invariants", True)),
            "read_base_ticks": int(config.get("service.read_base_ticks", 0)),
            "scan_ticks_per_version": int(config.get("service.scan_ticks_per_version", 1)),
            "init_value": config.get("history.init_value", 0),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        values["variant"] = Variant(values["variant"])
        if values["mutation"] is not None:
            values["mutation"] = Mutation(values["mutation"])
        return cls(**values)


@dataclass
class Metrics:
    """Per-run counters; latencies are in ticks from invocation to completion."""

    committed: int = 0
    reads: int = 0
    writes: int = 0
    ticks: int = 0
    versions_scanned: int = 0
    read_keys: int = 0
    latencies: list[int] = field(default_factory=list)
    messages: int = 0

    @property
    def throughput(self) -> float:
        """Committed transactions per 1000 ticks."""
        return 1000.0 * self.committed / self.ticks if self.ticks else 0.0

    @property
    def scanned_per_read(self) -> float:
        return self.versions_scanned / self.read_keys if self.read_keys else 0.0

    def latency_summary(self) -> dict[str, float]:
        if not self.latencies:
            return {"mean": 0.0, "p50": 0.0, "p99": 0.0}
        arr = np.asarray(self.latencies, dtype=np.float64)
        return {
            "mean": float(arr.mean()),
            "p50": float(np.percentile(arr, 50)),
            "p99": float(np.percentile(arr, 99)),
        }

    def as_dict(self) -> dict[str, Any]:
        return {
            "committed": self.committed,
            "reads": self.reads,
            "writes": self.writes,
            "ticks": self.ticks,
            "throughput": round(self.throughput, 4),
            "latency": {k: round(v, 4) for k, v in self.latency_summary().items()},
            "versions_scanned": self.versions_scanned,
            "scanned_per_read": round(self.scanned_per_read, 4),
            "messages": self.messages,
        }


class RunResult(NamedTuple):
    history: History
    metrics: Metrics


@dataclass(frozen=True)
class StepOutcome:
    outgoing: list[Envelope]
    completed: TxnId | None = None
    scanned: int = 0


class Cluster:
    """Clients and partitions wired together; the transport is left to the caller.

    ``invoke`` starts a transaction and ``deliver`` hands one in-flight
    envelope to its destination. Both return the envelopes to send next.
    Commit decisions and transaction completion happen automatically when
    the last reply of a phase arrives.
    """

    def __init__(
        self,
        keys: Sequence[Key],
        clients: Iterable[ClientId],
        partition_of: dict[Key, int] | None = None,
        variant: Variant = Variant.EIGER_PORT_PLUS,
        mutation: Mutation | None = None,
        init_value: Value = 0,
        check_invariants: bool = True,
    ):
        self.keys = list(keys)
        self.partition_of = partition_of or {k: 0 for k in self.keys}
        owned: dict[int, list[Key]] = {}
        for k in self.keys:
            owned.setdefault(self.partition_of[k], []).append(k)
        self.servers = {
            sid: Server(sid, ks, init_value, variant, mutation) for sid, ks in sorted(owned.items())
        }
        self.clients = {
            cl: Client(cl, self.keys, mutation, self.partition_of) for cl in sorted(clients)
        }
        self.history = History()
        self.invariants = InvariantMonitor() if check_invariants else None
        self.noc = NocMonitor() if check_invariants else None

    def server_for(self, k: Key) -> Server:
        try:
            return self.servers[self.partition_of[k]]
        except KeyError:
            raise ProtocolError(f"no partition owns key {k!r}")

    def invoke(self, cl: ClientId, txn: Txn, tick: int = 0) -> list[Envelope]:
        """Start ``txn`` on client ``cl``."""
        c = self.clients[cl]
        sn = c.cl_sn
        if isinstance(txn, ReadTxn):
            gst, reqs = c.cl_read_invoke(txn.keys)
            self.history.append(ViewExtend(cl, gst), tick)
            if self.noc:
                self.noc.on_read_invoke(c.txn, reqs)
            if self.invariants:
                self.invariants.check_gst(c)
                self.invariants.check_client(c, list(txn.keys))
            out = [Envelope(cl, sn, r) for r in reqs]
        else:
            out = [Envelope(cl, sn, r) for r in c.cl_write_invoke(txn.kv_map)]
        if self.noc:
            for env in out:
                self.noc.on_message(env.msg)
        return out

    def deliver(self, env: Envelope, tick: int = 0) -> StepOutcome:
        """Deliver one envelope and return the resulting step."""
        if env.to_server:
            server = self.server_for(env.key)
            reply = server.handle(env.msg)  # type: ignore[arg-type]
            if self.noc:
                if isinstance(env.msg, ReadReq):
                    self.noc.on_read_served(env.msg, reply)
                self.noc.on_message(reply)
            if self.invariants:
                self.invariants.check_server(server, [env.key])
                if isinstance(env.msg, CommitReq):
                    self.invariants.check_commit(server, env.msg.k, env.msg.t)
            scanned = reply.versions_scanned if isinstance(reply, ReadReply) else 0
            return StepOutcome([Envelope(env.client, env.sn, reply)], scanned=scanned)
        return self._client_step(env, tick)

    def _client_step(self, env: Envelope, tick: int) -> StepOutcome:
        c = self.clients[env.client]
        msg = env.msg
        outgoing: list[Envelope] = []
        completed = None
        if isinstance(msg, ReadReply):
            c.cl_read(msg.k, msg)
            if c.read_complete:
                record = c.cl_read_done()
                self.history.append(record, tick)
                if self.noc:
                    self.noc.on_read_done(record.txn)
                completed = record.txn
        elif isinstance(msg, PrepReply):
            c.cl_prepared(msg.k, msg)
            if c.prepared:
                _, reqs, record = c.cl_write_commit()
                self.history.append(record, tick)
                outgoing = [Envelope(env.client, env.sn, r) for r in reqs]
                if self.noc:
                    for out in outgoing:
                        self.noc.on_message(out.msg)
        elif isinstance(msg, CommitReply):
            if c.cl_write_done(msg.k, msg):
                completed = TxnId(env.client, env.sn)
        else:
            raise ProtocolError(f"client {env.client} cannot handle {type(msg).__name__}")
        if self.invariants:
            self.invariants.check_client(c, [msg.k])
        return StepOutcome(outgoing, completed)

    def check_quiescent(self, keys: Iterable[Key]) -> None:
        if not self.invariants:
            return
        clients = list(self.clients.values())
        for k in keys:
            self.invariants.check_quiescent(k, self.server_for(k), clients)

    def fingerprint(self) -> tuple:
        return (
            tuple(c.snapshot() for c in self.clients.values()),
            tuple(s.snapshot() for s in self.servers.values()),
            self.history.canonical(),
        )

    def dump(self) -> dict[str, Any]:
        """Summary of component states for deadlock reports."""
        return {
            "clients": {
                cl: {"state": type(c.cl_state).__name__, "sn": c.cl_sn, "clock": c.cl_clock, "gst": c.gst}
                for cl, c in self.clients.items()
            },
            "servers": {
                sid: {
                    "clock": s.svr_clock,
                    "pending": {k: sorted(p.elements()) for k, p in s.pending_wtxns.items() if p},
                }
                for sid, s in self.servers.items()
            },
        }


def default_partitioning(keys: Sequence[Key], partitions: int) -> dict[Key, int]:
    return {k: i % partitions for i, k in enumerate(keys)}


def run(cfg: SimConfig, workload: Workload | None = None) -> RunResult:
    """Run every client's workload to completion under seeded network delays.

    Args:
        cfg: Simulation parameters
        workload: Per-client transactions; generated from ``cfg`` when omitted

    Returns:
        The history and the run's metrics

    Raises:
        DeadlockError: If messages run out while transactions are incomplete
        InvariantViolation: If a runtime monitor fails
    """
    cfg.validate()
    if workload is None:
        workload = gen_workload(cfg.workload_spec())
    keys = key_names(cfg.keys)
    cluster = Cluster(
        keys,
        workload.keys(),
        default_partitioning(keys, cfg.partitions),
        cfg.variant,
        cfg.mutation,
        cfg.init_value,
        cfg.check_invariants,
    )
    net = Network(cfg.delays())
    metrics = Metrics()
    cursor = {cl: 0 for cl in workload}
    started: dict[ClientId, int] = {}
    logger.info(
        f"Run start: seed={cfg.seed} variant={cfg.variant.value} clients={len(workload)} "
        f"mutation={cfg.mutation.value if cfg.mutation else None}"
    )

    def start_next(cl: ClientId, now: int) -> None:
        i = cursor[cl]
        if i >= len(workload[cl]):
            return
        cursor[cl] = i + 1
        started[cl] = now
        for env in cluster.invoke(cl, workload[cl][i], now):
            net.send(now, env)

    for cl in sorted(workload):
        start_next(cl, 0)

    now = 0
    while len(net):
        now, env = net.next()
        step = cluster.deliver(env, now)
        if env.to_server:
            service = 0
            if isinstance(env.msg, ReadReq):
                service = cfg.read_base_ticks + cfg.scan_ticks_per_version * step.scanned
                metrics.versions_scanned += step.scanned
                metrics.read_keys += 1
            for out in step.outgoing:
                net.send(now, out, extra=service)
        else:
            for out in step.outgoing:
                net.send(now, out)
            if step.completed is not None:
                metrics.committed += 1
                metrics.latencies.append(now - started[env.client])
                if isinstance(env.msg, ReadReply):
                    metrics.reads += 1
                else:
                    metrics.writes += 1
                start_next(env.client, now)
        if net.quiet(env.key):
            cluster.check_quiescent([env.key])

    unfinished = [cl for cl, c in cluster.clients.items() if not c.idle or cursor[cl] < len(workload[cl])]
    if unfinished:
        raise DeadlockError(f"clients {unfinished} still have work but no events remain", cluster.dump())
    metrics.ticks = now
    metrics.messages = net.sent
    logger.info(
        f"Run end: seed={cfg.seed} committed={metrics.committed} ticks={metrics.ticks} "
        f"throughput={metrics.throughput:.2f}"
    )
    return RunResult(cluster.history, metrics)


ScriptStep = tuple


def scripted_run(
    script: Sequence[ScriptStep],
    keys: Sequence[Key],
    clients: Iterable[ClientId],
    partition_of: dict[Key, int] | None = None,
    variant: Variant = Variant.EIGER_PORT_PLUS,
    mutation: Mutation | None = None,
    init_value: Value = 0,
    check_invariants: bool = True,
) -> History:
    """Replay an explicit schedule.

    Steps:
        ``("write", cl, {key: value})`` invokes a write-only transaction;
        ``("read", cl, [keys])`` invokes a read-only transaction;
        ``("deliver", cl, key)`` delivers the client's in-flight request for
        ``key`` and then its reply;
        ``("run", cl)`` delivers the client's messages until its transaction completes.

    Raises:
        ScriptError: If a step is not enabled in the current state
    """
    if partition_of is None:
        partition_of = {k: i for i, k in enumerate(keys)}
    cluster = Cluster(keys, clients, partition_of, variant, mutation, init_value, check_invariants)
    in_flight: list[Envelope] = []

    def take(i: int, step: ScriptStep, cl: ClientId, key: Key | None = None) -> Envelope:
        for env in in_flight:
            if env.client == cl and env.to_server and (key is None or env.key == key):
                in_flight.remove(env)
                return env
        raise ScriptError(i, step, f"client {cl} has no request in flight" + (f" for {key!r}" if key else ""))

    def round_trip(env: Envelope) -> None:
        reply = cluster.deliver(env).outgoing
        for r in reply:
            in_flight.extend(cluster.deliver(r).outgoing)

    for i, step in enumerate(script):
        kind = step[0]
        if kind not in ("write", "read", "deliver", "run"):
            raise ScriptError(i, step, f"unknown step kind {kind!r}")
        cl = step[1]
        if cl not in cluster.clients:
            raise ScriptError(i, step, f"unknown client {cl}")
        c = cluster.clients[cl]
        if kind in ("write", "read"):
            if not c.idle:
                raise ScriptError(i, step, f"client {cl} is busy")
            txn: Txn = (
                WriteTxn(tuple(sorted(step[2].items()))) if kind == "write" else ReadTxn(tuple(step[2]))
            )
            in_flight.extend(cluster.invoke(cl, txn))
        elif kind == "deliver":
            round_trip(take(i, step, cl, step[2]))
        else:
            if c.idle:
                raise ScriptError(i, step, f"client {cl} has no transaction to run")
            while not c.idle:
                round_trip(take(i, step, cl))
    return cluster.history
