"""Tests for identifiers, logical time and value provenance."""

from src.eiger_port_plus.core import (
    INIT_CTS,
    INIT_TXN,
    CommitTs,
    Provenance,
    TxnId,
    clock_advance,
    commit_ts_cmp,
    decode_value,
    encode_value,
    so_precedes,
)


class TestCommitTs:
    """Test cases for the commit-timestamp order."""

    def test_clock_compared_first(self):
        """Test a smaller clock wins regardless of client."""
        assert commit_ts_cmp(CommitTs(3, 9), CommitTs(4, 1)) == -1
        assert CommitTs(3, 9) < CommitTs(4, 1)

    def test_client_breaks_ties(self):
        """Test equal clocks are ordered by client ID."""
        assert commit_ts_cmp(CommitTs(4, 1), CommitTs(4, 2)) == -1
        assert commit_ts_cmp(CommitTs(4, 2), CommitTs(4, 1)) == 1
        assert commit_ts_cmp(CommitTs(4, 2), CommitTs(4, 2)) == 0

    def test_cmp_agrees_with_tuple_order(self):
        """Test the comparator and the NamedTuple order never disagree."""
        stamps = [CommitTs(c, cl) for c in range(4) for cl in (-1, 0, 1, 2)]
        for a in stamps:
            for b in stamps:
                assert commit_ts_cmp(a, b) == (a > b) - (a < b)

    def test_init_sorts_first(self):
        """Test the init timestamp precedes every real commit."""
        assert INIT_CTS < CommitTs(0, 0)
        assert INIT_CTS < CommitTs(1, 0)


class TestClocks:
    """Test cases for Lamport clock advancement."""

    def test_advance_past_received(self):
        """Test the clock moves past a larger received value."""
        assert clock_advance(3, 7) == 8

    def test_advance_past_local(self):
        """Test the clock moves past itself when the received value is stale."""
        assert clock_advance(7, 3) == 8
        assert clock_advance(0, 0) == 1


class TestSessionOrder:
    """Test cases for so_precedes."""

    def test_same_client(self):
        """Test earlier sequence numbers precede later ones in a session."""
        assert so_precedes(TxnId(1, 0), TxnId(1, 2))
        assert not so_precedes(TxnId(1, 2), TxnId(1, 0))
        assert not so_precedes(TxnId(1, 1), TxnId(1, 1))

    def test_other_client(self):
        """Test transactions of different clients are unordered."""
        assert not so_precedes(TxnId(1, 0), TxnId(2, 5))
        assert not so_precedes(INIT_TXN, TxnId(0, 0))


class TestProvenance:
    """Test cases for value encoding."""

    def test_decode_encoded_value(self):
        """Test an encoded value names its writer and key."""
        p = decode_value(encode_value(3, 14, "k7"))
        assert p == Provenance(3, 14, "k7")
        assert p.txn == TxnId(3, 14)

    def test_key_may_contain_separator(self):
        """Test keys with colons survive decoding."""
        assert decode_value(encode_value(0, 1, "a:b")) == Provenance(0, 1, "a:b")

    def test_foreign_values(self):
        """Test values not built by encode_value decode to None."""
        assert decode_value(0) is None
        assert decode_value("X1") is None
        assert decode_value("v:x:1:k") is None
