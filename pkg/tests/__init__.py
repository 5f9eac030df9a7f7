"""Test package for LCCS Adapt."""
