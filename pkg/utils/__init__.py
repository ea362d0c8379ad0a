"""Numeric helpers and artifact writers."""
