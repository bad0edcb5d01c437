"""CSV, manifest and plot emission shared by the scenario runner.

CSV files are RFC-4180 (CRLF, header row) with units spelled out in the
column names; optional scalar metadata rides in leading '#' comment
lines.  Floats are serialized with repr-round-tripping precision so
identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os


def _fmt(value) -> str:
    if hasattr(value, "item"):          # numpy scalar
        value = value.item()
    if isinstance(value, float):
        return repr(value)              # shortest round-trip representation
    return str(value)


def write_csv(path, header, rows, comments: dict | None = None) -> None:
    buf = io.StringIO()
    if comments:
        for key, val in comments.items():
            buf.write(f"# {key} = {_fmt(val)}\r\n")
    writer = csv.writer(buf)            # csv default lineterminator is CRLF
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path):
    """Returns (comments dict, header list, rows as list of string lists)."""
    comments = {}
    rows = []
    header = None
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                comments[key.strip()] = val.strip()
                continue
            for parsed in csv.reader([line]):
                if parsed == [] or parsed == [""]:
                    continue
                if header is None:
                    header = parsed
                else:
                    rows.append(parsed)
    return comments, header or [], rows


def read_csv_columns(path):
    """Numeric columns of a CSV as {name: list-of-floats} (non-numeric kept as str)."""
    _, header, rows = read_csv(path)
    cols = {name: [] for name in header}
    for row in rows:
        for name, val in zip(header, row):
            try:
                cols[name].append(float(val))
            except ValueError:
                cols[name].append(val)
    return cols


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, entries: dict) -> None:
    with open(path, "w") as fh:
        for key, val in entries.items():
            fh.write(f"{key} = {_fmt(val)}\n")


def read_manifest(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


def plot_csv(csv_path, svg_path, x: str, ys: list[str], title: str = "",
             xlabel: str = "", ylabel: str = "", logy: bool = False) -> None:
    """Line plot of named CSV columns; the SVG is derived from the file
    on disk, never from in-memory state."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "halodar"
    cols = read_csv_columns(csv_path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for y in ys:
        ax.plot(cols[x], cols[y], label=y)
    ax.set_xlabel(xlabel or x)
    ax.set_ylabel(ylabel or ", ".join(ys))
    if title:
        ax.set_title(title)
    if logy:
        ax.set_yscale("log")
    if len(ys) > 1:
        ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
