"""
FEENet: finite element eigenbasis operator learning.
"""

__version__ = "0.1.0"
