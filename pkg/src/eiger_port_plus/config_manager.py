"""Configuration manager for the Eiger-PORT+ simulator."""

import copy
import logging
import os
from pathlib import Path
from typing import Any

import yaml

from .core import Mutation, Variant
from .network import DELAY_MODELS

logger = logging.getLogger(__name__)

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


class ConfigManager:
    """Manage configuration for simulation runs, exploration and checking."""

    DEFAULT_CONFIG = {
        "simulation": {
            "clients": 8,
            "partitions": 8,
            "variant": Variant.EIGER_PORT_PLUS.value,
            "seed": 1,
            "delay": {"model": "uniform", "low": 1, "high": 10},
            "mutation": None,
            "check_invariants": True,
        },
        "workload": {
            "keys": 10000,
            "theta": 0.8,
            "read_proportion": 0.9,
            "read_keys_per_txn": 4,
            "write_keys_per_txn": 2,
            "txns_per_client": 1000,
        },
        "service": {"read_base_ticks": 0, "scan_ticks_per_version": 1},
        "explore": {"clients": 2, "keys": 2, "txns_per_client": 2, "max_states": 2_000_000},
        "history": {"init_value": 0},
        "logging": {
            "level": "INFO",
            "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            "file": None,
        },
    }

    ENV_MAPPING = {
        "EPP_SEED": ("simulation", "seed"),
        "EPP_CLIENTS": ("simulation", "clients"),
        "EPP_PARTITIONS": ("simulation", "partitions"),
        "EPP_VARIANT": ("simulation", "variant"),
        "EPP_KEYS": ("workload", "keys"),
        "EPP_THETA": ("workload", "theta"),
        "EPP_READ_PROPORTION": ("workload", "read_proportion"),
        "EPP_TXNS_PER_CLIENT": ("workload", "txns_per_client"),
        "LOG_LEVEL": ("logging", "level"),
        "LOG_FILE": ("logging", "file"),
    }

    def __init__(self, config_path: str | Path | None = None, setup_logging: bool = True):
        """Initialize configuration manager.

        Args:
            config_path: Path to a YAML configuration file (optional)
            setup_logging: Configure the root logger from the logging section
        """
        self.config = copy.deepcopy(self.DEFAULT_CONFIG)
        self.config_path = config_path

        if config_path:
            self.load_from_file(config_path)

        self.load_from_environment()
        if setup_logging:
            self._setup_logging()

    def load_from_file(self, config_path: str | Path) -> None:
        """Load configuration from a YAML file.

        Args:
            config_path: Path to configuration file
        """
        config_path = Path(config_path)

        if not config_path.exists():
            logger.warning(f"Configuration file not found: {config_path}")
            return

        try:
            with open(config_path) as f:
                file_config = yaml.safe_load(f)

            if file_config:
                self.config = self._deep_merge(self.config, file_config)
                logger.info(f"Loaded configuration from {config_path}")
        except yaml.YAMLError as e:
            logger.error(f"Error loading configuration file: {e}")

    def load_from_environment(self) -> None:
        """Load configuration from environment variables."""
        for env_var, config_path in self.ENV_MAPPING.items():
            value = os.environ.get(env_var)
            if value is not None:
                self._set_nested(self.config, config_path, self._parse_env_value(value))
                logger.debug(f"Set {'.'.join(config_path)} from environment variable {env_var}")

    def get(self, key: str, default: Any = None) -> Any:
        """Get a configuration value using dot notation.

        Args:
            key: Configuration key (e.g., "simulation.clients")
            default: Default value if key not found

        Returns:
            Configuration value
        """
        value: Any = self.config
        for k in key.split("."):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any) -> None:
        """Set a configuration value using dot notation."""
        self._set_nested(self.config, tuple(key.split(".")), value)

    def get_all(self) -> dict[str, Any]:
        """Get the entire configuration."""
        return copy.deepcopy(self.config)

    def save_to_file(self, config_path: str | Path | None = None) -> None:
        """Save configuration to a YAML file.

        Raises:
            ValueError: If no path is given and none was loaded
        """
        if not config_path:
            config_path = self.config_path

        if not config_path:
            raise ValueError("No configuration file path specified")

        config_path = Path(config_path)
        config_path.parent.mkdir(parents=True, exist_ok=True)

        with open(config_path, "w") as f:
            yaml.dump(self.config, f, default_flow_style=False, sort_keys=False)

        logger.info(f"Saved configuration to {config_path}")

    def validate(self) -> dict[str, Any]:
        """Validate the configuration.

        Returns:
            Validation results with warnings and errors
        """
        results: dict[str, Any] = {"valid": True, "warnings": [], "errors": []}

        def error(message: str) -> None:
            results["errors"].append(message)
            results["valid"] = False

        for key in (
            "simulation.clients",
            "simulation.partitions",
            "workload.keys",
            "workload.read_keys_per_txn",
            "workload.write_keys_per_txn",
            "explore.clients",
            "explore.keys",
            "explore.max_states",
        ):
            value = self.get(key)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                error(f"{key} must be a positive integer, got {value!r}")

        txns = self.get("workload.txns_per_client")
        if not isinstance(txns, int) or txns < 0:
            error(f"workload.txns_per_client must be a non-negative integer, got {txns!r}")

        proportion = self.get("workload.read_proportion")
        if not isinstance(proportion, int | float) or not 0.0 <= proportion <= 1.0:
            error(f"workload.read_proportion must be in [0, 1], got {proportion!r}")

        theta = self.get("workload.theta")
        if not isinstance(theta, int | float) or theta < 0:
            error(f"workload.theta must be non-negative, got {theta!r}")

        keys = self.get("workload.keys")
        if isinstance(keys, int):
            for key in ("workload.read_keys_per_txn", "workload.write_keys_per_txn"):
                per_txn = self.get(key)
                if isinstance(per_txn, int) and per_txn > keys:
                    error(f"{key} ({per_txn}) exceeds the keyspace ({keys})")
            partitions = self.get("simulation.partitions")
            if isinstance(partitions, int) and partitions > keys:
                results["warnings"].append(
                    f"{partitions} partitions for {keys} keys; some partitions own no key"
                )

        variants = [v.value for v in Variant]
        if self.get("simulation.variant") not in variants:
            error(f"Unknown variant {self.get('simulation.variant')!r}, expected one of {variants}")

        mutation = self.get("simulation.mutation")
        if mutation is not None and mutation not in [m.value for m in Mutation]:
            error(f"Unknown mutation {mutation!r}")

        model = self.get("simulation.delay.model")
        if model not in DELAY_MODELS:
            error(f"Unknown delay model {model!r}, expected one of {list(DELAY_MODELS)}")
        low, high = self.get("simulation.delay.low"), self.get("simulation.delay.high")
        if not isinstance(low, int) or not isinstance(high, int) or not 0 <= low <= high:
            error(f"Delay bounds must satisfy 0 <= low <= high, got {low!r}, {high!r}")

        for key in ("service.read_base_ticks", "service.scan_ticks_per_version"):
            value = self.get(key)
            if not isinstance(value, int) or value < 0:
                error(f"{key} must be a non-negative integer, got {value!r}")

        log_level = self.get("logging.level", "INFO")
        if log_level not in LOG_LEVELS:
            results["warnings"].append(f"Invalid log level: {log_level}, using INFO")

        return results

    def _deep_merge(self, base: dict, update: dict) -> dict:
        """Deep merge two dictionaries.

        Args:
            base: Base dictionary
            update: Dictionary to merge into base

        Returns:
            Merged dictionary
        """
        result = base.copy()

        for key, value in update.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = self._deep_merge(result[key], value)
            else:
                result[key] = value

        return result

    def _set_nested(self, config: dict, keys: tuple, value: Any) -> None:
        for key in keys[:-1]:
            if key not in config:
                config[key] = {}
            config = config[key]

        config[keys[-1]] = value

    def _parse_env_value(self, value: str) -> Any:
        """Parse environment variable value to appropriate type.

        Args:
            value: String value from environment

        Returns:
            Parsed value
        """
        if value.lower() in ["true", "yes"]:
            return True
        elif value.lower() in ["false", "no"]:
            return False

        try:
            return int(value)
        except ValueError:
            pass

        try:
            return float(value)
        except ValueError:
            pass

        if value.startswith("[") and value.endswith("]"):
            items = value[1:-1].split(",")
            return [item.strip() for item in items if item.strip()]

        return value

    def _setup_logging(self) -> None:
        """Set up logging based on configuration."""
        level_name = self.get("logging.level", "INFO")
        log_level = getattr(logging, level_name if level_name in LOG_LEVELS else "INFO")
        log_format = self.get("logging.format")
        log_file = self.get("logging.file")

        logging.basicConfig(level=log_level, format=log_format, filename=log_file)

        if log_file:
            logger.info(f"Logging to file: {log_file}")
