"""Tests for ndo-sim."""
