"""Weighted-least-squares calibration and experiment generation."""
