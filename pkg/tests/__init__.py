"""Test suite."""

