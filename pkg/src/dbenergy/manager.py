"""
ConnectionManager - owns the adapters of one run.

Opens every configured target, tracks which ones failed, and closes them all
on exit.
"""

from __future__ import annotations

import atexit
import logging
from collections.abc import Callable, Iterable, Iterator
from typing import Any

from dbenergy.adapters import create_adapter
from dbenergy.adapters.base import Adapter
from dbenergy.errors import DatabaseConnectionError
from dbenergy.types import DbConfig

logger = logging.getLogger(__name__)


class ConnectionManager:
    """
    Connection lifetime manager for a set of database targets.

    Manages:
    - Opening adapters in configuration order
    - Recording targets whose connection failed or dropped
    - Closing every adapter once, also at interpreter exit

    Usage:
        with ConnectionManager() as manager:
            adapters = manager.open(config["databases"])
    """

    def __init__(self, factory: Callable[[DbConfig], Adapter] = create_adapter) -> None:
        """
        Initialize the manager.

        Args:
            factory: Builds an unconnected adapter from a DbConfig
        """
        self._factory = factory
        self._adapters: dict[str, Adapter] = {}
        self._failures: dict[str, DatabaseConnectionError] = {}
        self._closed = False
        atexit.register(self._cleanup_on_exit)

    @property
    def adapters(self) -> dict[str, Adapter]:
        """Connected adapters by database_id."""
        return dict(self._adapters)

    @property
    def failures(self) -> dict[str, DatabaseConnectionError]:
        """Connection errors by database_id."""
        return dict(self._failures)

    def _cleanup_on_exit(self) -> None:
        if not self._closed:
            self.close_all()

    def open(self, configs: Iterable[DbConfig], strict: bool = True) -> dict[str, Adapter]:
        """
        Connect every configured target.

        Args:
            configs: Targets to open, in order
            strict: Raise on the first connection failure; otherwise record
                it and continue with the remaining targets

        Returns:
            Connected adapters by database_id

        Raises:
            DatabaseConnectionError: In strict mode, if a target is unreachable.
            ConfigError: If a target's configuration is invalid.
        """
        if self._closed:
            raise RuntimeError("ConnectionManager is closed; no new connections allowed")
        for config in configs:
            adapter = self._factory(config)
            try:
                adapter.connect()
            except DatabaseConnectionError as e:
                self.mark_failed(adapter.database_id, e)
                if strict:
                    raise
                continue
            self._adapters[adapter.database_id] = adapter
        return self.adapters

    def get(self, database_id: str) -> Adapter:
        """Return the connected adapter for a target."""
        return self._adapters[database_id]

    def mark_failed(self, database_id: str, error: DatabaseConnectionError) -> None:
        """Record a connection failure and drop the target from the live set."""
        logger.error(f"Database {database_id} unavailable: {error}")
        self._failures[database_id] = error
        adapter = self._adapters.pop(database_id, None)
        if adapter is not None:
            adapter.close()

    def close_all(self) -> None:
        """Close all adapters. Safe to call more than once."""
        if self._adapters:
            logger.info("Closing all connections...")
        for adapter in list(self._adapters.values()):
            adapter.close()
        self._adapters.clear()
        self._closed = True

    def __iter__(self) -> Iterator[Adapter]:
        return iter(list(self._adapters.values()))

    def __enter__(self) -> ConnectionManager:
        """Context manager entry."""
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        """Context manager exit."""
        self.close_all()
