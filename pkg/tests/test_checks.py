"""Tests for the fast invariant suite."""

from unittest.mock import patch

from ndo_sim import checks
from ndo_sim.checks import CHECKS, run_checks


class TestChecks:
    """Test the validate suite."""

    def test_all_checks_pass(self):
        """Test that every built-in check passes."""
        results = run_checks()

        assert [r.name for r in results] == [name for name, _ in CHECKS]
        failed = [f"{r.name}: {r.detail}" for r in results if not r.passed]
        assert failed == []

    def test_exception_counts_as_failure(self):
        """Test that a raising check fails without stopping the suite."""
        def broken():
            raise RuntimeError("boom")

        suite = [("broken", broken), ("fine", lambda: (True, "ok"))]
        with patch.object(checks, "CHECKS", suite):
            results = run_checks()

        assert [r.passed for r in results] == [False, True]
        assert results[0].detail == "RuntimeError: boom"
        assert results[0].seconds >= 0.0
