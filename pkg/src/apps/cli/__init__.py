"""Command-line entry points and on-disk artifacts of a run."""
