"""UAV racing at desk scale: tracks, 6-DoF sim, rendering, imitation learning."""

__version__ = "0.1.0"
