"""Eiger-PORT+ transactional causal consistency: protocol simulator and history checker."""

__version__ = "1.0.0"
__all__ = [
    "abstract_model",
    "bench",
    "checker",
    "cli",
    "client",
    "config_manager",
    "core",
    "demo",
    "exceptions",
    "explorer",
    "history",
    "invariants",
    "messages",
    "network",
    "server",
    "simulator",
    "utils",
    "workload",
]
