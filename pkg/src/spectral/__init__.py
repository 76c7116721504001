"""Laplacian eigenbasis, projection and reconstruction."""
