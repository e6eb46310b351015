"""Manipulator dynamics, hybrid feedback/MPC control and a learned torque emulator."""
__version__ = "0.1.0"
