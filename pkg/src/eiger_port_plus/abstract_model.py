"""Centralized abstract transaction model used as the consistency oracle.

A configuration is a multi-versioned key-value store together with one view
per client. A view maps each key to the set of version indices the client can
see; keys a view does not mention see only the init version (index 0). A
transaction commits against a view when every commit guard holds; a client
may also extend its view at any time.
"""

import copy
import itertools
import logging
from collections import deque
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum

from .core import INIT_TXN, ClientId, Key, TxnId, Value
from .exceptions import ExplorationLimitError

logger = logging.getLogger(__name__)

View = dict[Key, frozenset[int]]
Relation = set[tuple[TxnId, TxnId]]

INIT_INDICES: frozenset[int] = frozenset({0})


class Op(str, Enum):
    R = "R"
    W = "W"


Fingerprint = dict[tuple[Key, Op], Value]


@dataclass
class AbstractVersion:
    val: Value
    writer: TxnId
    readers: set[TxnId] = field(default_factory=set)


class AbstractKVS:
    """Version lists per key, materialized lazily from the init version.

    Also indexes which versions each transaction wrote and which
    transactions appear as readers, so visibility and closedness queries
    never walk the whole keyspace.
    """

    def __init__(self, keyspace: Iterable[Key], init_value: Value = 0):
        self.keyspace = frozenset(keyspace)
        self.init_value = init_value
        self._versions: dict[Key, list[AbstractVersion]] = {}
        self.writes_of: dict[TxnId, dict[Key, int]] = {}
        self.readers: set[TxnId] = set()

    def versions(self, k: Key) -> list[AbstractVersion]:
        if k not in self._versions:
            self._versions[k] = [AbstractVersion(self.init_value, INIT_TXN)]
        return self._versions[k]

    def length(self, k: Key) -> int:
        return len(self._versions[k]) if k in self._versions else 1

    def version(self, k: Key, i: int) -> AbstractVersion:
        return self.versions(k)[i]

    def append(self, k: Key, version: AbstractVersion) -> int:
        versions = self.versions(k)
        versions.append(version)
        index = len(versions) - 1
        self.writes_of.setdefault(version.writer, {})[k] = index
        return index

    def add_reader(self, k: Key, i: int, reader: TxnId) -> None:
        self.versions(k)[i].readers.add(reader)
        self.readers.add(reader)

    def touched_keys(self) -> list[Key]:
        return sorted(self._versions)

    def rdonly(self) -> set[TxnId]:
        """Transactions that appear only as readers."""
        return {t for t in self.readers if t not in self.writes_of}

    def is_rdonly(self, t: TxnId) -> bool:
        return t in self.readers and t not in self.writes_of

    def occurs(self, t: TxnId) -> bool:
        return t == INIT_TXN or t in self.writes_of or t in self.readers

    def copy(self) -> "AbstractKVS":
        return copy.deepcopy(self)

    def canonical(self) -> tuple:
        """Hashable form that omits untouched keys."""
        out = []
        for k in sorted(self._versions):
            versions = self._versions[k]
            if len(versions) == 1 and not versions[0].readers:
                continue
            out.append(
                (k, tuple((v.val, v.writer, frozenset(v.readers)) for v in versions))
            )
        return tuple(out)


def view_get(u: Mapping[Key, frozenset[int]], k: Key) -> frozenset[int]:
    return u.get(k, INIT_INDICES)


def view_leq(u: Mapping[Key, frozenset[int]], w: Mapping[Key, frozenset[int]]) -> bool:
    """Pointwise set inclusion of views."""
    return all(view_get(u, k) <= view_get(w, k) for k in u)


def view_union(u: Mapping[Key, frozenset[int]], w: Mapping[Key, frozenset[int]]) -> View:
    return {k: view_get(u, k) | view_get(w, k) for k in set(u) | set(w)}


def normalize_view(u: Mapping[Key, frozenset[int]]) -> tuple:
    return tuple(sorted((k, tuple(sorted(s))) for k, s in u.items() if s != INIT_INDICES))


@dataclass
class AbstractConfig:
    kvs: AbstractKVS
    views: dict[ClientId, View] = field(default_factory=dict)

    @classmethod
    def initial(
        cls, keyspace: Iterable[Key], clients: Iterable[ClientId] = (), init_value: Value = 0
    ) -> "AbstractConfig":
        return cls(AbstractKVS(keyspace, init_value), {cl: {} for cl in clients})

    def view(self, cl: ClientId) -> View:
        return self.views.get(cl, {})

    def canonical(self) -> tuple:
        views = tuple(
            (cl, normalize_view(u)) for cl, u in sorted(self.views.items()) if normalize_view(u)
        )
        return (self.kvs.canonical(), views)

    def copy(self) -> "AbstractConfig":
        return copy.deepcopy(self)


@dataclass(frozen=True)
class Rejection:
    """A failed commit guard with a human-readable detail."""

    guard: str
    detail: str

    def __bool__(self) -> bool:
        return False


def vis_tx(K: AbstractKVS, u: Mapping[Key, frozenset[int]]) -> set[TxnId]:
    """Writers of every version the view points to.

    Raises:
        IndexError: If the view points past a version list
    """
    visible = {INIT_TXN}
    for k, indices in u.items():
        versions = K.versions(k) if k in K.keyspace else []
        for i in indices:
            if i < 0 or i >= len(versions):
                raise IndexError(f"view index {i} out of range for key {k!r}")
            visible.add(versions[i].writer)
    return visible


def predecessors(so: Relation, wr: Relation) -> dict[TxnId, set[TxnId]]:
    """Map each transaction to its direct session-order and write-read predecessors."""
    preds: dict[TxnId, set[TxnId]] = {}
    for a, b in itertools.chain(so, wr):
        preds.setdefault(b, set()).add(a)
    return preds


def closed(
    K: AbstractKVS,
    u: Mapping[Key, frozenset[int]],
    so: Relation,
    wr: Relation,
    known_closed: set[TxnId] | None = None,
    preds: dict[TxnId, set[TxnId]] | None = None,
) -> bool:
    """Check that the view's visible transactions are closed under SO and WR predecessors.

    Every transaction reachable backwards from a visible one must itself be
    visible or be read-only. Read-only transactions are traversed, so their
    own dependencies still count.

    Args:
        K: Store the view points into
        u: View under test
        so: Session-order successor pairs
        wr: Write-read pairs (writer, reader)
        known_closed: Visible transactions already known to be closed; the search skips them
        preds: Precomputed predecessor map for ``so`` and ``wr``

    Returns:
        True iff the view is closed
    """
    visible = vis_tx(K, u)
    if preds is None:
        preds = predecessors(so, wr)
    known = known_closed or set()
    frontier = deque(t for t in visible if t not in known)
    seen = set(frontier)
    while frontier:
        t = frontier.popleft()
        for p in preds.get(t, ()):
            if p in seen or p in known:
                continue
            if p not in visible and not K.is_rdonly(p):
                return False
            seen.add(p)
            frontier.append(p)
    return True


def can_commit_tccv(
    K: AbstractKVS,
    u: Mapping[Key, frozenset[int]],
    F: Fingerprint,
    so: Relation,
    wr: Relation,
    known_closed: set[TxnId] | None = None,
    preds: dict[TxnId, set[TxnId]] | None = None,
) -> bool:
    """Commit condition for transactional causal consistency: the view is closed."""
    return closed(K, u, so, wr, known_closed=known_closed, preds=preds)


def lww_read_ok(K: AbstractKVS, u: Mapping[Key, frozenset[int]], F: Fingerprint) -> bool:
    """Every read returns the latest version of its key in the view."""
    for (k, op), v in F.items():
        if op is Op.R and K.version(k, max(view_get(u, k))).val != v:
            return False
    return True


def wellformed(K: AbstractKVS, u: Mapping[Key, frozenset[int]]) -> str | None:
    """Return why the view is not wellformed, or None when it is.

    A wellformed view points only at existing versions, always includes the
    init version and sees either all or none of each transaction's writes.
    """
    for k, indices in u.items():
        if k not in K.keyspace:
            return f"key {k!r} is not in the keyspace"
        if 0 not in indices:
            return f"view of {k!r} misses the init version"
        n = K.length(k)
        if any(i < 0 or i >= n for i in indices):
            return f"view of {k!r} points past its {n} versions"
    for t in vis_tx(K, u):
        for k, i in K.writes_of.get(t, {}).items():
            if i not in view_get(u, k):
                return f"view is not atomic: sees {t} but not its write of {k!r}"
    return None


def update_kv(K: AbstractKVS, t: TxnId, u: Mapping[Key, frozenset[int]], F: Fingerprint) -> None:
    """Record ``t``'s reads on the latest visible versions and append its writes."""
    for (k, op), _ in sorted(F.items()):
        if op is Op.R:
            K.add_reader(k, max(view_get(u, k)), t)
    for (k, op), v in sorted(F.items()):
        if op is Op.W:
            K.append(k, AbstractVersion(v, t))


@dataclass
class GuardContext:
    cfg: AbstractConfig
    cl: ClientId
    sn: int
    u: View
    u_after: View
    F: Fingerprint
    so: Relation
    wr: Relation
    known_closed: set[TxnId] | None = None
    preds: dict[TxnId, set[TxnId]] | None = None

    @property
    def txn(self) -> TxnId:
        return TxnId(self.cl, self.sn)

    def written_after(self) -> dict[Key, int]:
        """Indices the new versions will take after UpdateKV."""
        K = self.cfg.kvs
        return {k: K.length(k) for (k, op) in self.F if op is Op.W}


def _guard_view_monotonic(ctx: GuardContext) -> str | None:
    if not view_leq(ctx.cfg.view(ctx.cl), ctx.u):
        return f"client {ctx.cl}'s view is not contained in the commit view"
    return None


def _guard_wellformed(ctx: GuardContext) -> str | None:
    reason = wellformed(ctx.cfg.kvs, ctx.u)
    if reason:
        return f"commit view: {reason}"
    K = ctx.cfg.kvs
    new = ctx.written_after()
    for k, indices in ctx.u_after.items():
        limit = K.length(k) + (1 if k in new else 0)
        if 0 not in indices or any(i < 0 or i >= limit for i in indices):
            return f"post-commit view of {k!r} is out of range"
    seen_new = [k for k, i in new.items() if i in view_get(ctx.u_after, k)]
    if seen_new and len(seen_new) != len(new):
        return "post-commit view sees only part of the transaction's own writes"
    existing = {k: frozenset(i for i in s if i < K.length(k)) for k, s in ctx.u_after.items()}
    for t in vis_tx(K, existing):
        for k, i in K.writes_of.get(t, {}).items():
            if i not in view_get(ctx.u_after, k):
                return f"post-commit view is not atomic: sees {t} but not its write of {k!r}"
    return None


def _guard_can_commit(ctx: GuardContext) -> str | None:
    try:
        ok = can_commit_tccv(
            ctx.cfg.kvs,
            ctx.u,
            ctx.F,
            ctx.so,
            ctx.wr,
            known_closed=ctx.known_closed,
            preds=ctx.preds,
        )
    except IndexError as e:
        return str(e)
    return None if ok else "commit view is not closed under session and write-read order"


def _guard_view_extends(ctx: GuardContext) -> str | None:
    if not view_leq(ctx.u, ctx.u_after):
        return "post-commit view does not contain the commit view"
    return None


def _guard_read_your_writes(ctx: GuardContext) -> str | None:
    K = ctx.cfg.kvs
    for t, writes in K.writes_of.items():
        if t.client != ctx.cl:
            continue
        for k, i in writes.items():
            if i not in view_get(ctx.u_after, k):
                return f"post-commit view misses own version {k}[{i}] by {t}"
    for k, i in ctx.written_after().items():
        if i not in view_get(ctx.u_after, k):
            return f"post-commit view misses the new version of {k!r}"
    return None


def _guard_last_write_wins(ctx: GuardContext) -> str | None:
    try:
        ok = lww_read_ok(ctx.cfg.kvs, ctx.u, ctx.F)
    except IndexError as e:
        return str(e)
    if ok:
        return None
    for (k, op), v in sorted(ctx.F.items()):
        if op is Op.R:
            latest = ctx.cfg.kvs.version(k, max(view_get(ctx.u, k)))
            if latest.val != v:
                return f"read {k}={v!r} but the latest visible version is {latest.val!r} by {latest.writer}"
    return "read is not the latest visible version"


def _guard_fresh_txn(ctx: GuardContext) -> str | None:
    if ctx.cfg.kvs.occurs(ctx.txn):
        return f"transaction ID {ctx.txn} was already used"
    floor = _next_sn(ctx.cfg.kvs, ctx.cl)
    if ctx.sn < floor:
        return f"sn {ctx.sn} is not above client {ctx.cl}'s sequence numbers already in the store"
    return None


GUARDS: tuple[tuple[str, Callable[[GuardContext], str | None]], ...] = (
    ("wellformed", _guard_wellformed),
    ("view-monotonic", _guard_view_monotonic),
    ("can-commit", _guard_can_commit),
    ("view-extends", _guard_view_extends),
    ("read-your-writes", _guard_read_your_writes),
    ("last-write-wins", _guard_last_write_wins),
    ("fresh-txn", _guard_fresh_txn),
)


def commit_step(
    cfg: AbstractConfig,
    cl: ClientId,
    sn: int,
    u: View,
    u_after: View,
    F: Fingerprint,
    so: Relation,
    wr: Relation,
    *,
    in_place: bool = False,
    known_closed: set[TxnId] | None = None,
    preds: dict[TxnId, set[TxnId]] | None = None,
) -> AbstractConfig | Rejection:
    """Commit transaction ``(cl, sn)`` with fingerprint ``F`` from view ``u``.

    Args:
        cfg: Configuration before the commit
        cl: Committing client
        sn: Transaction sequence number
        u: View the transaction executes on
        u_after: Client view after the commit
        F: Transaction fingerprint
        so: Session-order pairs
        wr: Write-read pairs
        in_place: Mutate ``cfg`` instead of returning a copy
        known_closed: Visible transactions already known to be closed
        preds: Precomputed predecessor map for ``so`` and ``wr``

    Returns:
        The new configuration, or a Rejection naming the first failed guard
    """
    ctx = GuardContext(cfg, cl, sn, u, u_after, F, so, wr, known_closed, preds)
    for name, guard in GUARDS:
        detail = guard(ctx)
        if detail is not None:
            return Rejection(name, detail)
    new = cfg if in_place else cfg.copy()
    update_kv(new.kvs, ctx.txn, u, F)
    new.views[cl] = dict(u_after)
    return new


def xview_step(
    cfg: AbstractConfig, cl: ClientId, u: View, *, in_place: bool = False
) -> AbstractConfig | Rejection:
    """Extend client ``cl``'s view to ``u``."""
    if not view_leq(cfg.view(cl), u):
        return Rejection("view-monotonic", f"client {cl}'s view would shrink")
    reason = wellformed(cfg.kvs, u)
    if reason:
        return Rejection("wellformed", reason)
    new = cfg if in_place else cfg.copy()
    new.views[cl] = dict(u)
    return new


@dataclass(frozen=True)
class ReachBounds:
    clients: int = 1
    keys: int = 1
    txns_per_client: int = 1
    values: tuple[Value, ...] = (1,)
    init_value: Value = 0
    max_states: int = 200_000

    @property
    def keyspace(self) -> list[Key]:
        return [f"k{i}" for i in range(self.keys)]


def _wellformed_views(K: AbstractKVS, keyspace: list[Key]) -> list[View]:
    per_key = []
    for k in keyspace:
        n = K.length(k)
        options = [
            frozenset({0, *extra})
            for r in range(n)
            for extra in itertools.combinations(range(1, n), r)
        ]
        per_key.append(options)
    views = []
    for combo in itertools.product(*per_key):
        u = {k: s for k, s in zip(keyspace, combo, strict=True) if s != INIT_INDICES}
        if wellformed(K, u) is None:
            views.append(u)
    return views


def _next_sn(K: AbstractKVS, cl: ClientId) -> int:
    used = [t.sn for t in itertools.chain(K.writes_of, K.readers) if t.client == cl]
    return max(used) + 1 if used else 0


def _fingerprint_shapes(keyspace: list[Key]) -> list[tuple[Op, tuple[Key, ...]]]:
    subsets = [
        combo for r in range(1, len(keyspace) + 1) for combo in itertools.combinations(keyspace, r)
    ]
    return [(Op.R, s) for s in subsets] + [(Op.W, s) for s in subsets]


def _relations(K: AbstractKVS) -> tuple[Relation, Relation]:
    txns = set(K.writes_of) | K.readers
    by_client: dict[ClientId, list[TxnId]] = {}
    for t in txns:
        by_client.setdefault(t.client, []).append(t)
    so = set()
    for ts in by_client.values():
        ts.sort()
        so.update(zip(ts, ts[1:], strict=False))
    wr = set()
    for k in K.touched_keys():
        for v in K.versions(k):
            wr.update((v.writer, r) for r in v.readers)
    return so, wr


def enumerate_reach(bounds: ReachBounds) -> set[tuple]:
    """Enumerate every abstract configuration reachable within ``bounds``.

    Transactions are read-only or write-only over non-empty key subsets;
    writes take values from ``bounds.values``. Configurations are returned
    in their canonical hashable form.

    Raises:
        ExplorationLimitError: If more than ``bounds.max_states`` configurations are found
    """
    keyspace = bounds.keyspace
    clients = list(range(bounds.clients))
    start = AbstractConfig.initial(keyspace, clients, bounds.init_value)
    seen = {start.canonical()}
    queue = deque([start])
    while queue:
        cfg = queue.popleft()
        K = cfg.kvs
        so, wr = _relations(K)
        current_views = _wellformed_views(K, keyspace)
        successors: list[AbstractConfig | Rejection] = []
        for cl in clients:
            for u in current_views:
                if u != cfg.view(cl):
                    successors.append(xview_step(cfg, cl, u))
            sn = _next_sn(K, cl)
            if sn >= bounds.txns_per_client:
                continue
            for op, key_subset in _fingerprint_shapes(keyspace):
                for u in current_views:
                    if op is Op.R:
                        F: Fingerprint = {
                            (k, Op.R): K.version(k, max(view_get(u, k))).val for k in key_subset
                        }
                        successors.append(commit_step(cfg, cl, sn, u, u, F, so, wr))
                        continue
                    for vals in itertools.product(bounds.values, repeat=len(key_subset)):
                        F = {(k, Op.W): v for k, v in zip(key_subset, vals, strict=True)}
                        successors.extend(
                            commit_step(cfg, cl, sn, u, u_after, F, so, wr)
                            for u_after in _post_views(K, keyspace, u, key_subset)
                        )
        for nxt in successors:
            if isinstance(nxt, Rejection):
                continue
            key = nxt.canonical()
            if key in seen:
                continue
            seen.add(key)
            if len(seen) > bounds.max_states:
                raise ExplorationLimitError(len(seen), bounds.max_states)
            queue.append(nxt)
    logger.info(f"Enumerated {len(seen)} abstract configurations within {bounds}")
    return seen


def _post_views(
    K: AbstractKVS, keyspace: list[Key], u: View, written: tuple[Key, ...]
) -> list[View]:
    """Candidate post-commit views: supersets of ``u`` over the store after the write."""
    trial = K.copy()
    probe = TxnId(-2, 0)
    for k in written:
        trial.append(k, AbstractVersion(None, probe))  # type: ignore[arg-type]
    return [w for w in _wellformed_views(trial, keyspace) if view_leq(u, w)]
