"""Test package for mflsi."""
