"""Pytest configuration and shared fixtures."""

import os

import pytest

from src.eiger_port_plus.simulator import SimConfig


@pytest.fixture(autouse=True)
def clean_epp_environment():
    """Automatically clean simulator-related environment variables for each test."""
    saved_env = {}
    epp_vars = [
        "EPP_SEED",
        "EPP_CLIENTS",
        "EPP_PARTITIONS",
        "EPP_VARIANT",
        "EPP_KEYS",
        "EPP_THETA",
        "EPP_READ_PROPORTION",
        "EPP_TXNS_PER_CLIENT",
        "LOG_LEVEL",
        "LOG_FILE",
    ]

    for var in epp_vars:
        if var in os.environ:
            saved_env[var] = os.environ[var]
            del os.environ[var]

    yield

    for var in epp_vars:
        if var in os.environ:
            del os.environ[var]

    for var, value in saved_env.items():
        os.environ[var] = value


@pytest.fixture
def small_config():
    """A run small enough for unit tests with real contention."""
    return SimConfig(
        clients=4,
        partitions=3,
        keys=12,
        txns_per_client=40,
        read_proportion=0.6,
        theta=0.8,
        read_keys_per_txn=3,
        write_keys_per_txn=2,
        seed=7,
    )
