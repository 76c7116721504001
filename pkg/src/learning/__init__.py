"""Branch network, normalizers and Adam training."""
