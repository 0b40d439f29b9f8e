"""Configuration module for the tomography toolkit."""
