"""Distributionally robust distribution-network configuration planning."""
__version__ = "0.1.0"
