"""Commit-aware test-suite prioritisation: diff, history and coverage features feeding
boosted trees or a small network, evaluated leave-one-project-out."""

__version__ = "0.1.0"
