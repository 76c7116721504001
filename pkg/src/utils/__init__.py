"""Shared utilities: logging, exceptions, timing and input validation."""
