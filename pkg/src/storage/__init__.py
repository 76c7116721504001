"""Artifact persistence: FEEN containers, typed artifacts and exports."""
