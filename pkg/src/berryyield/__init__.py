"""Detector-agnostic blueberry yield toolkit.

Evaluates berry and bush detector outputs, plans stratified field sampling
missions and turns per-bush berry counts into yield estimates.
"""

__version__ = "0.1.0"
