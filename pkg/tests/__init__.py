"""Tests for badm-dance."""
