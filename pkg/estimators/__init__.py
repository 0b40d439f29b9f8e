"""Detector and state tomography estimators."""
