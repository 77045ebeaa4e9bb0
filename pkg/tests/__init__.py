"""madf test suite."""
