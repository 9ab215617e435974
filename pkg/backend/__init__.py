"""Numerical backend of the hypocoercivity test suite."""
