"""In-sandbox runner for candidate plotting scripts.

Reads one job as JSON on stdin, executes the script headlessly in the
current working directory, saves every rendered figure, and writes one
JSON result object to stdout. Stdout belongs to the protocol; everything
the script prints is redirected to stderr.
"""

from .runner import main, run_job

__all__ = ["main", "run_job"]
