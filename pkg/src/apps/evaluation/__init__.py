"""Retrieval metrics, per-round percentile curves, language-quality proxies and rank tests."""
