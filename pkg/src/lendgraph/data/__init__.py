"""Bundled configuration: category vocabulary and identifier rules."""
