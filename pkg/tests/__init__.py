"""genfric test suite."""
