"""Utility modules for file handling and plotting."""
