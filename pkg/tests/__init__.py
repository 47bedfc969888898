"""Test suite for the acbounds package."""
