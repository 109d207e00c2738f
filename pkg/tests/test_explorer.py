"""Tests for bounded exhaustive exploration."""

import pytest

from src.eiger_port_plus.abstract_model import ReachBounds, enumerate_reach
from src.eiger_port_plus.checker import replay
from src.eiger_port_plus.core import Mutation
from src.eiger_port_plus.exceptions import ExplorationLimitError
from src.eiger_port_plus.explorer import check_explored, explore
from src.eiger_port_plus.workload import ReadTxn, WriteTxn, exploration_workload, key_names


class TestScheduleCounts:
    """Test cases for counting interleavings of a single transaction."""

    def test_single_key_write(self):
        """Test a one-key write has exactly one schedule."""
        result = explore({0: [WriteTxn((("k0", 1),))]}, ["k0"])
        assert result.schedules == 1
        assert len(result.histories) == 1

    def test_two_key_write(self):
        """Test a two-key write interleaves both phases independently."""
        result = explore({0: [WriteTxn((("k0", 1), ("k1", 2)))]}, ["k0", "k1"])
        # 6 orderings of prepare round trips times 6 of commit round trips
        assert result.schedules == 36
        assert len(result.histories) == 1

    def test_two_key_read(self):
        """Test a two-key read interleaves its two round trips."""
        result = explore({0: [ReadTxn(("k0", "k1"))]}, ["k0", "k1"])
        assert result.schedules == 6
        assert len(result.histories) == 1

    def test_state_cap(self):
        """Test exceeding the state cap raises ExplorationLimitError."""
        with pytest.raises(ExplorationLimitError) as exc:
            explore({0: [WriteTxn((("k0", 1), ("k1", 2)))]}, ["k0", "k1"], max_states=5)
        assert exc.value.cap == 5


class TestExploredHistories:
    """Test cases for checking every explored history."""

    def test_writer_and_reader(self):
        """Test a concurrent writer and reader over one key."""
        result = explore(exploration_workload(2, 1, 1), key_names(1))
        report = check_explored(result)

        assert report.passed
        assert len(result.histories) >= 2
        assert result.schedules > len(result.histories)

    def test_two_clients_two_keys(self):
        """Test every interleaving of a two-key writer and reader is consistent."""
        result = explore(exploration_workload(2, 2, 1), key_names(2))
        assert check_explored(result).passed

    def test_mutation_found(self):
        """Test exploration exposes a read rule that ignores the snapshot."""
        result = explore(
            exploration_workload(2, 1, 1),
            key_names(1),
            mutation=Mutation.READ_LATEST,
            check_invariants=False,
        )
        report = check_explored(result)

        assert not report.passed
        assert any(v.guard == "last-write-wins" for v in report.failures)

    def test_matches_abstract_model(self):
        """Test the concrete final state is reachable in the abstract model."""
        result = explore({0: [WriteTxn((("k0", 1),))]}, ["k0"])
        reach = enumerate_reach(ReachBounds(clients=1, keys=1, txns_per_client=1, values=(1,)))

        for h in result.histories:
            config = replay(h, 0, keyspace=["k0"], clients=[0]).config
            assert config.canonical() in reach

    def test_two_writers_one_key(self):
        """Test two single-key writers are explored in both commit orders and all pass."""
        workload = {0: [WriteTxn((("k0", 1),))], 1: [WriteTxn((("k0", 2),))]}
        result = explore(workload, ["k0"])

        assert check_explored(result).passed
        orders = set()
        for h in result.histories:
            cts = {w.txn.client: w.cts for w in h.writes}
            orders.add(cts[0] < cts[1])
        assert orders == {True, False}

    def test_two_writers_match_abstract_model(self):
        """Test every explored two-client final state is reachable in the abstract model."""
        workload = {0: [WriteTxn((("k0", 1),))], 1: [WriteTxn((("k0", 2),))]}
        result = explore(workload, ["k0"])
        reach = enumerate_reach(ReachBounds(clients=2, keys=1, txns_per_client=1, values=(1, 2)))

        for h in result.histories:
            config = replay(h, 0, keyspace=["k0"], clients=[0, 1]).config
            assert config.canonical() in reach
