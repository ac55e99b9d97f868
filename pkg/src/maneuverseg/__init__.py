"""Driving-maneuver segmentation, classification and evaluation for yaw-rate telemetry."""
