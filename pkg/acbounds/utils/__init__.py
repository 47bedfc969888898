"""Utility helpers shared across acbounds."""
