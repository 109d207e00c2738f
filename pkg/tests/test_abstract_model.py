"""Tests for the abstract transaction model and its commit guards."""

import itertools
import random

import pytest

from src.eiger_port_plus.abstract_model import (
    AbstractConfig,
    AbstractKVS,
    AbstractVersion,
    Op,
    ReachBounds,
    Rejection,
    closed,
    commit_step,
    enumerate_reach,
    predecessors,
    vis_tx,
    wellformed,
    xview_step,
)
from src.eiger_port_plus.core import INIT_TXN, TxnId
from src.eiger_port_plus.exceptions import ExplorationLimitError


def brute_force_closed(K, u, so, wr):
    """Reference closedness: transitive closure of SO and WR, then a pointwise check."""
    txns = {INIT_TXN} | set(K.writes_of) | K.readers
    for a, b in so | wr:
        txns.update((a, b))
    reach = {t: set() for t in txns}
    for a, b in so | wr:
        reach[b].add(a)
    changed = True
    while changed:
        changed = False
        for t in txns:
            extra = set().union(*(reach[p] for p in reach[t])) - reach[t] if reach[t] else set()
            if extra:
                reach[t] |= extra
                changed = True
    visible = vis_tx(K, u)
    return all(p in visible or K.is_rdonly(p) for t in visible for p in reach[t])


def build_graph(roles, clients, wr_pairs, visible_writers):
    """Store, view and relations for a dependency graph.

    ``roles[i]`` is True for writers; writer ``i`` writes its own key. Every
    read-only transaction also reads the init version of key ``r`` so it
    appears as a reader.
    """
    n = len(roles)
    next_sn = {}
    txns = []
    for i in range(n):
        cl = clients[i]
        txns.append(TxnId(cl, next_sn.get(cl, 0)))
        next_sn[cl] = next_sn.get(cl, 0) + 1
    keys = [f"k{i}" for i in range(n)] + ["r"]
    K = AbstractKVS(keys)
    for i, t in enumerate(txns):
        if roles[i]:
            K.append(f"k{i}", AbstractVersion(i, t))
    wr = set()
    for i, t in enumerate(txns):
        if not roles[i]:
            K.add_reader("r", 0, t)
            wr.add((INIT_TXN, t))
    for w, r in wr_pairs:
        K.add_reader(f"k{w}", 1, txns[r])
        wr.add((txns[w], txns[r]))
    so = set()
    by_client = {}
    for t in txns:
        by_client.setdefault(t.client, []).append(t)
    for ts in by_client.values():
        so.update(zip(ts, ts[1:]))
    u = {f"k{i}": frozenset({0, 1}) for i in visible_writers}
    return K, u, so, wr


def random_graph(rng, n):
    roles = [rng.random() < 0.5 for _ in range(n)]
    clients = [rng.randrange(3) for _ in range(n)]
    writers = [i for i in range(n) if roles[i]]
    wr_pairs = [(w, r) for w in writers for r in range(w + 1, n) if rng.random() < 0.3]
    visible = [w for w in writers if rng.random() < 0.5]
    return build_graph(roles, clients, wr_pairs, visible)


class TestClosedAgainstBruteForce:
    """closed() must agree with a transitive-closure oracle."""

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_exhaustive_small_graphs(self, n):
        """Test every role assignment, forward WR edge set and visible set on n transactions."""
        clients = [i % 2 for i in range(n)]
        for roles in itertools.product([False, True], repeat=n):
            writers = [i for i in range(n) if roles[i]]
            pairs = [(w, r) for w in writers for r in range(w + 1, n)]
            for mask in range(1 << len(pairs)):
                wr_pairs = [p for j, p in enumerate(pairs) if mask >> j & 1]
                for vis_mask in range(1 << len(writers)):
                    visible = [w for j, w in enumerate(writers) if vis_mask >> j & 1]
                    K, u, so, wr = build_graph(roles, clients, wr_pairs, visible)
                    assert closed(K, u, so, wr) == brute_force_closed(K, u, so, wr)

    def test_random_six_transaction_graphs(self):
        """Test random graphs with three sessions and six transactions."""
        rng = random.Random(6)
        for _ in range(3000):
            K, u, so, wr = random_graph(rng, 6)
            assert closed(K, u, so, wr) == brute_force_closed(K, u, so, wr)

    def test_random_twenty_transaction_graphs(self):
        """Test 1000 random 20-transaction graphs."""
        rng = random.Random(20)
        for _ in range(1000):
            K, u, so, wr = random_graph(rng, 20)
            assert closed(K, u, so, wr) == brute_force_closed(K, u, so, wr)

    def test_precomputed_predecessors_agree(self):
        """Test passing a predecessor map does not change the answer."""
        rng = random.Random(3)
        for _ in range(200):
            K, u, so, wr = random_graph(rng, 10)
            assert closed(K, u, so, wr, preds=predecessors(so, wr)) == closed(K, u, so, wr)

    def test_missing_writer_is_not_closed(self):
        """Test a visible reader of an invisible writer breaks closedness."""
        K, u, so, wr = build_graph([True, True], [0, 1], [(0, 1)], [1])
        assert not closed(K, u, so, wr)

    def test_read_only_predecessors_are_traversed(self):
        """Test dependencies behind a read-only transaction still count."""
        # t0.0 writes k0, t1.0 reads it, t1.1 writes k2 and is visible
        K, u, so, wr = build_graph([True, False, True], [0, 1, 1], [(0, 1)], [2])
        assert not closed(K, u, so, wr)
        K, u, so, wr = build_graph([True, False, True], [0, 1, 1], [(0, 1)], [0, 2])
        assert closed(K, u, so, wr)


def two_writer_config():
    """Client 0 wrote a=1, client 1 read it and wrote b=2."""
    cfg = AbstractConfig.initial(["a", "b"], [0, 1, 2])
    t0, t1 = TxnId(0, 0), TxnId(1, 0)
    cfg.kvs.append("a", AbstractVersion(1, t0))
    cfg.kvs.add_reader("a", 1, t1)
    cfg.kvs.append("b", AbstractVersion(2, t1))
    return cfg, {(t0, t1)}


class TestCommitGuards:
    """Test cases for commit_step and xview_step."""

    def test_read_commit(self):
        """Test a read of the latest visible versions commits and records its reads."""
        cfg, wr = two_writer_config()
        u = {"a": frozenset({0, 1}), "b": frozenset({0, 1})}
        F = {("a", Op.R): 1, ("b", Op.R): 2}

        new = commit_step(cfg, 2, 0, u, u, F, set(), wr)

        assert isinstance(new, AbstractConfig)
        assert TxnId(2, 0) in new.kvs.version("b", 1).readers
        assert new.view(2) == u
        assert TxnId(2, 0) not in cfg.kvs.version("b", 1).readers

    def test_write_commit_appends(self):
        """Test a write appends a version and the client sees it afterwards."""
        cfg = AbstractConfig.initial(["a"], [0])
        u_after = {"a": frozenset({0, 1})}

        new = commit_step(cfg, 0, 0, {}, u_after, {("a", Op.W): 5}, set(), set())

        assert new.kvs.length("a") == 2
        assert new.kvs.version("a", 1).writer == TxnId(0, 0)
        assert new.view(0) == u_after

    def test_not_closed(self):
        """Test a view seeing a reader but not its writer is rejected."""
        cfg, wr = two_writer_config()
        u = {"b": frozenset({0, 1})}

        rej = commit_step(cfg, 2, 0, u, u, {("b", Op.R): 2}, set(), wr)

        assert isinstance(rej, Rejection)
        assert rej.guard == "can-commit"
        assert not rej

    def test_stale_read(self):
        """Test reading an older version than the latest visible one is rejected."""
        cfg, wr = two_writer_config()
        u = {"a": frozenset({0, 1})}

        rej = commit_step(cfg, 2, 0, u, u, {("a", Op.R): 0}, set(), wr)

        assert rej.guard == "last-write-wins"
        assert "latest visible version is 1" in rej.detail

    def test_missing_own_write(self):
        """Test a post-commit view that drops the client's own version is rejected."""
        cfg = AbstractConfig.initial(["a"], [0])

        rej = commit_step(cfg, 0, 0, {}, {}, {("a", Op.W): 5}, set(), set())

        assert rej.guard == "read-your-writes"

    def test_reused_txn_id(self):
        """Test a transaction ID cannot commit twice."""
        cfg, wr = two_writer_config()
        u_after = {"a": frozenset({0, 1, 2})}

        rej = commit_step(cfg, 0, 0, {"a": frozenset({0, 1})}, u_after, {("a", Op.W): 3}, set(), wr)

        assert rej.guard == "fresh-txn"

    def test_stale_sequence_number(self):
        """Test a client cannot commit an unused sn below one it already committed."""
        cfg = AbstractConfig.initial(["a"], [0])
        cfg = commit_step(cfg, 0, 5, {}, {"a": frozenset({0, 1})}, {("a", Op.W): 1}, set(), set())
        u = {"a": frozenset({0, 1})}

        rej = commit_step(cfg, 0, 2, u, {"a": frozenset({0, 1, 2})}, {("a", Op.W): 2}, set(), set())

        assert isinstance(rej, Rejection)
        assert rej.guard == "fresh-txn"
        assert "sn 2" in rej.detail

    def test_higher_sequence_number_accepted(self):
        """Test a client may skip sequence numbers as long as they increase."""
        cfg = AbstractConfig.initial(["a"], [0])
        cfg = commit_step(cfg, 0, 2, {}, {"a": frozenset({0, 1})}, {("a", Op.W): 1}, set(), set())
        u = {"a": frozenset({0, 1})}

        new = commit_step(cfg, 0, 5, u, u, {("a", Op.R): 1}, set(), set())

        assert not isinstance(new, Rejection)
        assert new.kvs.is_rdonly(TxnId(0, 5))

    def test_shrinking_view(self):
        """Test a commit view smaller than the client's view is rejected."""
        cfg, wr = two_writer_config()
        cfg.views[2] = {"a": frozenset({0, 1})}

        rej = commit_step(cfg, 2, 0, {}, {}, {("b", Op.R): 0}, set(), wr)

        assert rej.guard == "view-monotonic"

    def test_xview(self):
        """Test view extension accepts supersets and rejects shrinking or fractured views."""
        cfg = AbstractConfig.initial(["a", "b"], [0, 1])
        cfg.kvs.append("a", AbstractVersion(1, TxnId(0, 0)))
        cfg.kvs.append("b", AbstractVersion(1, TxnId(0, 0)))
        full = {"a": frozenset({0, 1}), "b": frozenset({0, 1})}

        assert xview_step(cfg, 1, {"a": frozenset({0, 1})}).guard == "wellformed"
        extended = xview_step(cfg, 1, full)
        assert extended.view(1) == full
        assert xview_step(extended, 1, {}).guard == "view-monotonic"

    def test_wellformed(self):
        """Test wellformedness checks range and the init version."""
        K = AbstractKVS(["a"])
        assert wellformed(K, {}) is None
        assert "init version" in wellformed(K, {"a": frozenset({1})})
        assert "points past" in wellformed(K, {"a": frozenset({0, 1})})
        assert "keyspace" in wellformed(K, {"z": frozenset({0})})


class TestEnumerateReach:
    """Test cases for bounded reachability."""

    def test_single_client_single_key(self):
        """Test one client, one key, one transaction and one value reach exactly three configurations."""
        configs = enumerate_reach(ReachBounds(clients=1, keys=1, txns_per_client=1, values=(1,)))
        assert len(configs) == 3

    def test_initial_configuration_included(self):
        """Test the initial configuration is reachable."""
        bounds = ReachBounds(clients=2, keys=1, txns_per_client=1)
        initial = AbstractConfig.initial(bounds.keyspace, range(bounds.clients)).canonical()
        assert initial in enumerate_reach(bounds)

    def test_more_clients_reach_more(self):
        """Test adding a client only adds configurations."""
        one = enumerate_reach(ReachBounds(clients=1, keys=1, txns_per_client=1))
        two = enumerate_reach(ReachBounds(clients=2, keys=1, txns_per_client=1))
        assert one < two

    def test_state_cap(self):
        """Test the cap raises instead of running on."""
        with pytest.raises(ExplorationLimitError):
            enumerate_reach(ReachBounds(clients=2, keys=2, txns_per_client=2, max_states=5))
