"""Co-simulation of a biomechanical user model and a VR application."""

__version__ = "0.1.0"
