"""
Shell adapter: runs a configured command once per query.

The query text is passed as a single trailing argument, e.g. with
options {"command": "sqlite3 /tmp/bench.db"} a query runs as
`sqlite3 /tmp/bench.db "<query text>"`.
"""

from __future__ import annotations

import logging
import shlex
import shutil
import subprocess
from collections.abc import Mapping, Sequence
from typing import Any

from dbenergy.adapters.base import Adapter
from dbenergy.errors import ConfigError
from dbenergy.types import DatasetSchema, DbKind, Payload, QuerySpec

logger = logging.getLogger(__name__)


class ShellAdapter(Adapter):
    """Runs each query through an external command; reports 0 rows."""

    kind = DbKind.SHELL
    supports_ingest = False

    def __init__(self, config: Any) -> None:
        super().__init__(config)
        self._argv: list[str] = []

    def _connect(self) -> None:
        command = self.options.get("command", "").strip()
        if not command:
            raise ConfigError(f"shell target {self.database_id} needs options.command")
        argv = shlex.split(command)
        if shutil.which(argv[0]) is None:
            raise ConfigError(f"shell target {self.database_id}: {argv[0]} not found on PATH")
        self._argv = argv

    def _close(self) -> None:
        self._argv = []

    def _execute(self, payload: Payload, spec: QuerySpec) -> int:
        if not isinstance(payload, str):
            raise ConfigError(f"query '{spec.label}' needs command text for shell")
        cmd = [*self._argv, payload]
        logger.debug(f"Command: {' '.join(cmd)}")
        try:
            result = subprocess.run(cmd, capture_output=True, text=True, check=False)
        except OSError as e:
            raise self.query_error(f"cannot run {self._argv[0]}: {e}", spec) from e
        if result.returncode != 0:
            error_msg = result.stderr.strip() or result.stdout.strip() or "Unknown error"
            raise self.query_error(f"exit status {result.returncode}: {error_msg}", spec)
        return 0

    def _unsupported(self) -> ConfigError:
        return ConfigError(f"shell target {self.database_id} does not support dataset ingest")

    def create_storage(self, schema: DatasetSchema, table: str, replace: bool = False) -> None:
        raise self._unsupported()

    def insert_rows(
        self,
        table: str,
        schema: DatasetSchema,
        rows: Sequence[Mapping[str, Any]],
        first_key: int,
    ) -> int:
        raise self._unsupported()

    def count_rows(self, table: str) -> int:
        raise self._unsupported()
