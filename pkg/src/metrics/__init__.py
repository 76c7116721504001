"""Error norms and evaluation studies."""
