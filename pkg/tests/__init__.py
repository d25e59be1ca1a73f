"""Tests for dbenergy."""
