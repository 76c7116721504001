"""Typed run specifications."""
