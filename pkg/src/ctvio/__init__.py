"""Continuous-time visual-inertial trajectory estimation with per-keyframe cubic splines."""

__version__ = "0.1.0"
