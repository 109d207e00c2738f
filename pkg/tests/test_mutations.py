"""Tests that each injected protocol fault is caught by a checker or monitor."""

import dataclasses

import pytest

from src.eiger_port_plus.checker import check_all, check_convergence, check_sessions, check_tccv
from src.eiger_port_plus.core import INIT_TXN, Mutation
from src.eiger_port_plus.exceptions import InvariantViolation, MalformedHistoryError
from src.eiger_port_plus.simulator import SimConfig, run, scripted_run

# Client 3 pushes partition 0's clock ahead, so client 1's write prepares at
# 18 on key a but at 1 on key b. The reader then learns b's new lst while
# the write is still uncommitted at a.
SKEWED_PREPARE = (
    ("write", 3, {"c": "C1"}),
    ("run", 3),
    ("write", 3, {"c": "C2"}),
    ("run", 3),
    ("write", 3, {"c": "C3"}),
    ("run", 3),
    ("write", 3, {"a": "A0"}),
    ("run", 3),
    ("read", 2, ["a", "c"]),
    ("run", 2),
    ("write", 1, {"a": "A1", "b": "B1"}),
    ("deliver", 1, "a"),
    ("deliver", 1, "b"),
    ("deliver", 1, "b"),
    ("read", 2, ["b"]),
    ("run", 2),
    ("read", 2, ["a"]),
    ("run", 2),
    ("deliver", 1, "a"),
)
SKEWED_PARTITIONS = {"a": 0, "b": 1, "c": 0}

OWN_READ = (("write", 1, {"a": "A1"}), ("run", 1), ("read", 1, ["a"]), ("run", 1))
CONCURRENT_WRITES = (
    ("write", 1, {"a": "A1"}),
    ("deliver", 1, "a"),
    ("write", 2, {"a": "A2"}),
    ("run", 2),
    ("run", 1),
)
FRESH_WRITE_THEN_READ = (("write", 1, {"a": "A1"}), ("run", 1), ("read", 2, ["a"]), ("run", 2))


def _failed_checks(h):
    return [v for v in check_all(h) if not v.passed]


class TestScriptedMutations:
    """Test cases pinning each fault to a schedule that exposes it."""

    def test_skewed_prepare_passes(self):
        """Test the skewed schedule is consistent with the max prepare timestamp."""
        h = scripted_run(SKEWED_PREPARE, ["a", "b", "c"], [1, 2, 3], SKEWED_PARTITIONS)
        assert not _failed_checks(h)
        assert h.writes[-1].cts.clock == 18

    def test_min_prepare_timestamp(self):
        """Test committing at the smallest prepare timestamp loses a write."""
        h = scripted_run(
            SKEWED_PREPARE,
            ["a", "b", "c"],
            [1, 2, 3],
            SKEWED_PARTITIONS,
            mutation=Mutation.CTS_MIN_PREPARE,
            check_invariants=False,
        )
        final = h.reads[-1]

        assert h.writes[-1].cts.clock == 1
        assert final.rts == 3
        assert final.reads["a"] == (0, INIT_TXN)
        assert check_tccv(h).guard == "last-write-wins"

    def test_min_prepare_timestamp_monitored(self):
        """Test the runtime monitor flags a commit below a prepare timestamp."""
        with pytest.raises(InvariantViolation) as exc:
            scripted_run(
                SKEWED_PREPARE, ["a", "b", "c"], [1, 2, 3], SKEWED_PARTITIONS, mutation=Mutation.CTS_MIN_PREPARE
            )
        assert exc.value.invariant == "commit-after-prepare"
        assert "'a'" in str(exc.value)

    def test_skip_read_your_writes(self):
        """Test dropping the own-version rule breaks read-your-writes."""
        assert not _failed_checks(scripted_run(OWN_READ, ["a", "b"], [1]))

        h = scripted_run(OWN_READ, ["a", "b"], [1], mutation=Mutation.SKIP_RYW)
        assert h.reads[0].reads["a"] == (0, INIT_TXN)
        assert check_sessions(h).guard == "read-your-writes"
        assert check_tccv(h).guard == "last-write-wins"

    def test_gst_max(self):
        """Test a gst above some key's lst trips the runtime monitor."""
        with pytest.raises(InvariantViolation) as exc:
            scripted_run(OWN_READ, ["a", "b"], [1], mutation=Mutation.GST_MAX)
        assert exc.value.invariant == "gst-below-lst-map"

    def test_lst_ignores_pending(self):
        """Test an lst that passes a pending prepare trips the runtime monitor."""
        assert not _failed_checks(scripted_run(CONCURRENT_WRITES, ["a"], [1, 2]))

        with pytest.raises(InvariantViolation) as exc:
            scripted_run(CONCURRENT_WRITES, ["a"], [1, 2], mutation=Mutation.LST_IGNORES_PENDING)
        assert exc.value.invariant == "lst-below-pending"

    def test_read_latest(self):
        """Test ignoring the snapshot timestamp returns a version outside the view."""
        assert not _failed_checks(scripted_run(FRESH_WRITE_THEN_READ, ["a"], [1, 2]))

        h = scripted_run(FRESH_WRITE_THEN_READ, ["a"], [1, 2], mutation=Mutation.READ_LATEST)
        assert h.reads[0].reads["a"][0] == "A1"
        assert check_tccv(h).guard == "last-write-wins"


def _detected(cfg: SimConfig) -> bool:
    try:
        h = run(cfg).history
        verdicts = [check_tccv(h, minimize=False), check_convergence(h), check_sessions(h)]
    except (InvariantViolation, MalformedHistoryError):
        return True
    return not all(v.passed for v in verdicts)


class TestRandomizedMutations:
    """Test cases finding faults in seeded random runs."""

    BASE = SimConfig(
        clients=4,
        partitions=2,
        keys=4,
        txns_per_client=40,
        read_proportion=0.5,
        theta=0.5,
        read_keys_per_txn=2,
        write_keys_per_txn=2,
    )

    @pytest.mark.parametrize(
        "mutation",
        list(Mutation),
    )
    def test_detected_within_seeds(self, mutation):
        """Test some seed in a small range exposes the fault."""
        assert any(
            _detected(dataclasses.replace(self.BASE, seed=seed, mutation=mutation)) for seed in range(1, 31)
        )

    def test_unmutated_runs_clean(self):
        """Test the same configuration without faults passes every seed."""
        assert not any(_detected(dataclasses.replace(self.BASE, seed=seed)) for seed in range(1, 11))
