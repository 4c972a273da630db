"""Probe-guided, budgeted repair of Scratch 3 projects with JSON Patch candidates."""
from __future__ import annotations

__version__ = "0.1.0"
