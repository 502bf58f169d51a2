"""Octorotor simulator, cascaded PID autopilot and supervisory PPO layer."""

__version__ = "0.1.0"
