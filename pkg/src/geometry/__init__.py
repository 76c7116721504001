"""Mesh generation, ingestion and point location."""
