"""Render figures from dualplc run artifacts.

This package talks to the simulator only through its exported CSV files;
it never imports the simulator.
"""

from __future__ import annotations

__version__ = "0.1.0"


class FigureError(Exception):
    """Bad input data or an unusable figure request."""
