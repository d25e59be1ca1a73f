"""
Tests for ConnectionManager.
"""

import pytest

from dbenergy.errors import DatabaseConnectionError
from dbenergy.manager import ConnectionManager
from tests.conftest import mock_db


class TestConnectionManager:
    """Tests for opening and closing a set of targets."""

    def test_open_all(self):
        """Test that every target is connected in order."""
        with ConnectionManager() as manager:
            adapters = manager.open([mock_db("a"), mock_db("b")])
            assert list(adapters) == ["a", "b"]
            assert all(adapter.connected for adapter in manager)
        assert not adapters["a"].connected

    def test_strict_failure(self):
        """Test that strict mode raises on the first unreachable target."""
        with ConnectionManager() as manager:
            with pytest.raises(DatabaseConnectionError):
                manager.open([mock_db("a"), mock_db("down", connect_error="refused"), mock_db("c")])
            assert "down" in manager.failures
            assert "c" not in manager.adapters

    def test_lenient_failure(self):
        """Test that lenient mode records the failure and continues."""
        with ConnectionManager() as manager:
            adapters = manager.open(
                [mock_db("a"), mock_db("down", connect_error="auth"), mock_db("c")], strict=False
            )
            assert list(adapters) == ["a", "c"]
            assert list(manager.failures) == ["down"]

    def test_mark_failed(self):
        """Test that a dropped target is closed and removed."""
        with ConnectionManager() as manager:
            adapters = manager.open([mock_db("a")])
            manager.mark_failed("a", DatabaseConnectionError("lost", "a"))
            assert manager.adapters == {}
            assert not adapters["a"].connected

    def test_close_all_twice(self):
        """Test that closing is idempotent and blocks new connections."""
        manager = ConnectionManager()
        manager.open([mock_db("a")])
        manager.close_all()
        manager.close_all()
        with pytest.raises(RuntimeError, match="closed"):
            manager.open([mock_db("b")])

    def test_get(self):
        """Test lookup by id."""
        with ConnectionManager() as manager:
            manager.open([mock_db("a")])
            assert manager.get("a").database_id == "a"
