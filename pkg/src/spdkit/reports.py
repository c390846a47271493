"""Delimited reports and companion figures for the command-line tools.

CSV files carry the raw data; every report that writes delimited output
also renders a PNG figure of the same data next to it (unless figures
are disabled), so a run leaves both machine- and human-readable
artifacts in the output directory.  JSON payloads carry a ``schema``
version field so downstream consumers can detect layout changes.
"""

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["write_csv", "write_json", "render_lines"]


def write_csv(path, header, rows):
    """Write rows of scalars as CSV with the given header.

    Values are stringified with ``str``, which round-trips floats.
    Returns the path for convenient chaining into log lines.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else str(v) for v in row])
    return path


def write_json(path, payload):
    """Write a JSON report; the caller includes the ``schema`` field."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return path


def _positive_floor(values):
    """Clip nonpositive entries so they survive a logarithmic axis."""
    floor = 1e-300
    return [v if v > 0.0 else floor for v in values]


def render_lines(path, series, xlabel, ylabel, title,
                 logx=False, logy=False):
    """Render labeled (x, y) series as a line plot with markers.

    ``series`` is a list of (label, xs, ys) triples.  Logarithmic axes
    clip nonpositive values to a tiny floor rather than dropping points,
    so converged-to-zero residuals stay visible at the plot's bottom.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=120)
    for label, xs, ys in series:
        ax.plot(xs, _positive_floor(ys) if logy else list(ys),
                marker="o", markersize=3.5, linewidth=1.2, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    if series:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
