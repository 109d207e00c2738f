"""Tests for the client transaction coordinator."""

import pytest

from src.eiger_port_plus.client import Client, Idle, RtxnInProg, WtxnCommit, WtxnPrep
from src.eiger_port_plus.core import INIT_TXN, CommitTs, Mutation, TxnId
from src.eiger_port_plus.exceptions import ProtocolError, UsageError
from src.eiger_port_plus.messages import CommitReply, PrepReply, ReadReply

KEYS = ["a", "b", "c"]


def prepared_client(prep_ts, mutation=None):
    """A client with a write of every key in ``prep_ts`` fully prepared."""
    c = Client(4, KEYS, mutation)
    c.cl_write_invoke({k: f"{k}1" for k in prep_ts})
    for k, p in prep_ts.items():
        c.cl_prepared(k, PrepReply(k, c.txn, p, p))
    return c


class TestReadTransactions:
    """Test cases for read-only transactions."""

    def test_invoke_reads_at_min_lst(self):
        """Test the read timestamp is the minimum local safe time over the keyspace."""
        c = Client(1, KEYS)
        c.lst_map.update(a=5, b=3, c=9)

        gst, reqs = c.cl_read_invoke(["c", "a"])

        assert gst == 3 == c.gst
        assert [r.k for r in reqs] == ["a", "c"]
        assert all(r.rts == 3 and r.reader == TxnId(1, 0) for r in reqs)
        assert isinstance(c.cl_state, RtxnInProg)

    def test_gst_max_mutation(self):
        """Test the injected fault reads at the maximum instead."""
        c = Client(1, KEYS, Mutation.GST_MAX)
        c.lst_map.update(a=5, b=3, c=9)

        gst, _ = c.cl_read_invoke(["a"])

        assert gst == 9

    def test_replies_complete_the_read(self):
        """Test every reply is absorbed and the read commits once all arrive."""
        c = Client(1, KEYS)
        c.cl_read_invoke(["a", "b"])

        c.cl_read("a", ReadReply("a", "x", TxnId(2, 0), lst=4, clk=7))
        assert not c.read_complete
        assert c.cl_clock == 8
        assert c.lst_map["a"] == 4

        c.cl_read("b", ReadReply("b", 0, INIT_TXN, lst=2, clk=3))
        assert c.read_complete
        assert c.cl_clock == 9

        record = c.cl_read_done()
        assert record.txn == TxnId(1, 0)
        assert record.rts == 0
        assert record.reads == {"a": ("x", TxnId(2, 0)), "b": (0, INIT_TXN)}
        assert c.idle
        assert c.cl_sn == 1

    def test_empty_or_unknown_keys(self):
        """Test invalid key sets are usage errors."""
        c = Client(1, KEYS)
        with pytest.raises(UsageError):
            c.cl_read_invoke([])
        with pytest.raises(UsageError):
            c.cl_read_invoke(["zz"])
        assert c.idle

    def test_busy_client(self):
        """Test a second transaction cannot start while one is in progress."""
        c = Client(1, KEYS)
        c.cl_read_invoke(["a"])
        with pytest.raises(ProtocolError):
            c.cl_read_invoke(["b"])
        with pytest.raises(ProtocolError):
            c.cl_write_invoke({"b": 1})

    def test_stray_read_reply(self):
        """Test replies for keys not being read are rejected."""
        c = Client(1, KEYS)
        c.cl_read_invoke(["a"])
        with pytest.raises(ProtocolError):
            c.cl_read("b", ReadReply("b", 0, INIT_TXN, 0, 0))
        c.cl_read("a", ReadReply("a", 0, INIT_TXN, 0, 0))
        with pytest.raises(ProtocolError):
            c.cl_read("a", ReadReply("a", 0, INIT_TXN, 0, 0))

    def test_done_before_complete(self):
        """Test a read cannot commit with replies missing."""
        c = Client(1, KEYS)
        c.cl_read_invoke(["a", "b"])
        with pytest.raises(ProtocolError):
            c.cl_read_done()


class TestWriteTransactions:
    """Test cases for write-only transactions."""

    def test_invoke_sends_prepares(self):
        """Test one prepare per key, carrying the client clock."""
        c = Client(2, KEYS)
        c.cl_clock = 6

        reqs = c.cl_write_invoke({"b": "B", "a": "A"})

        assert [(r.k, r.v, r.t, r.cl_clock) for r in reqs] == [
            ("a", "A", TxnId(2, 0), 6),
            ("b", "B", TxnId(2, 0), 6),
        ]
        assert isinstance(c.cl_state, WtxnPrep)

    def test_prepare_does_not_absorb_clock(self):
        """Test prepare replies leave the client clock alone."""
        c = prepared_client({"a": 10})
        assert c.cl_clock == 0
        assert c.prepared

    def test_commit_ts_is_max_prepare(self):
        """Test the commit timestamp takes the largest prepare timestamp."""
        c = prepared_client({"a": 4, "b": 9, "c": 6})

        cts, reqs, record = c.cl_write_commit()

        assert cts == CommitTs(9, 4)
        assert c.cl_clock == 10
        assert all(r.cts == cts and r.cl_clock == 10 for r in reqs)
        assert record.txn == TxnId(4, 0)
        assert record.writes == {"a": "a1", "b": "b1", "c": "c1"}
        assert isinstance(c.cl_state, WtxnCommit)

    def test_cts_min_prepare_mutation(self):
        """Test the injected fault commits at the smallest prepare timestamp."""
        c = prepared_client({"a": 4, "b": 9}, Mutation.CTS_MIN_PREPARE)

        cts, _, _ = c.cl_write_commit()

        assert cts == CommitTs(4, 4)

    def test_commit_acks(self):
        """Test the transaction finishes after the last commit acknowledgement."""
        c = prepared_client({"a": 4, "b": 9})
        cts, _, _ = c.cl_write_commit()

        assert c.cl_write_done("a", CommitReply("a", c.txn, lst=11, clk=12)) is False
        assert c.cl_clock == 13
        assert c.cl_write_done("b", CommitReply("b", c.txn, lst=7, clk=8)) is True
        assert c.lst_map == {"a": 11, "b": 7, "c": 0}
        assert isinstance(c.cl_state, Idle)
        assert c.txn == TxnId(4, 1)

    def test_commit_before_prepared(self):
        """Test committing with prepares outstanding is rejected."""
        c = Client(4, KEYS)
        c.cl_write_invoke({"a": 1, "b": 2})
        c.cl_prepared("a", PrepReply("a", c.txn, 3, 3))
        with pytest.raises(ProtocolError):
            c.cl_write_commit()

    def test_foreign_prepare_reply(self):
        """Test a prepare reply for another transaction is rejected."""
        c = Client(4, KEYS)
        c.cl_write_invoke({"a": 1})
        with pytest.raises(ProtocolError):
            c.cl_prepared("a", PrepReply("a", TxnId(4, 7), 3, 3))

    def test_empty_write(self):
        """Test a write with no keys is a usage error."""
        c = Client(4, KEYS)
        with pytest.raises(UsageError):
            c.cl_write_invoke({})

    def test_reply_in_wrong_state(self):
        """Test a commit reply while idle is a protocol error."""
        c = Client(4, KEYS)
        with pytest.raises(ProtocolError):
            c.cl_write_done("a", CommitReply("a", c.txn, 0, 0))


class TestPartitionedSafeTime:
    """Test cases for local safe times tracked per partition."""

    PLACEMENT = {"a": 0, "b": 0, "c": 1}

    def test_one_entry_per_partition(self):
        """Test the client tracks one local safe time for each partition."""
        c = Client(1, KEYS, partition_of=self.PLACEMENT)
        assert c.lst_map == {0: 0, 1: 0}

    def test_reply_refreshes_partition_keys(self):
        """Test a reply for one key moves the safe time of every key on that partition."""
        c = Client(1, KEYS, partition_of=self.PLACEMENT)
        c.cl_read_invoke(["a"])
        c.cl_read("a", ReadReply("a", 0, INIT_TXN, lst=6, clk=7))
        c.cl_read_done()

        assert c.lst_of("b") == 6
        assert c.lst_of("c") == 0
        c.lst_map[1] = 4
        gst, _ = c.cl_read_invoke(["b"])
        assert gst == 4

    def test_late_reply_keeps_newer_safe_time(self):
        """Test an older lst arriving after a newer one from the same partition is ignored."""
        c = Client(4, KEYS, partition_of=self.PLACEMENT)
        c.cl_write_invoke({"a": 1, "b": 2})
        c.cl_prepared("a", PrepReply("a", c.txn, 4, 4))
        c.cl_prepared("b", PrepReply("b", c.txn, 5, 5))
        c.cl_write_commit()

        c.cl_write_done("b", CommitReply("b", c.txn, lst=9, clk=9))
        c.cl_write_done("a", CommitReply("a", c.txn, lst=7, clk=10))

        assert c.lst_map == {0: 9, 1: 0}
