"""Bundled deterministic reference operator scripts."""
