"""Figure rendering for vibrecoil CSV artifacts.

This package never runs the simulator: it consumes only the CSV tables
(and their comment metadata headers) written by the ``vibrecoil`` CLI and
turns them into publication-style figures.
"""

__version__ = "1.0.0"

#: The only CSV schema this renderer accepts (pinned to the simulator's).
CSV_SCHEMA = "vibrecoil-csv/1"


class FiggenError(Exception):
    """Any input or schema problem that prevents rendering."""
