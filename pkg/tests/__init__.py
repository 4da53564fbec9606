"""Test suite for virl. Shared fixtures live in conftest.py."""
