"""Gaze spiral slitscans and scanpath analysis for mobile eye tracking."""

__version__ = "0.1.0"
