"""Configuration and report services."""
