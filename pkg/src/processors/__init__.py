"""Random fields, ground-truth solvers and dataset generation."""
