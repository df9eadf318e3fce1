"""Firmware image to prioritised vulnerability triage report."""

__version__ = "0.1.0"
TOOL_NAME = "firmtriage"
