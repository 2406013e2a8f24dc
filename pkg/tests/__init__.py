"""Tests for the vfl_shield package."""
