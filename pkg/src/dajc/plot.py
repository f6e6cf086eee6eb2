"""Static SVG line plots drawn straight from sweep CSV files."""

import csv
import io

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "dajc"  # stable element ids


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def line_plot(rows, x, ys, *, title="", xlabel=None, ylabel=None, logx=False):
    """SVG text of ``ys`` columns against column ``x``."""
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [float(r[x]) for r in rows]
    for y in ys:
        ax.plot(xs, [float(r[y]) for r in rows], marker="o", label=y)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel or x)
    ax.set_ylabel(ylabel or ", ".join(ys))
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if len(ys) > 1:
        ax.legend()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def plot_csv(csv_path, svg_path, x, ys, **kwargs):
    svg = line_plot(read_csv(csv_path), x, ys, **kwargs)
    with open(svg_path, "w") as fh:
        fh.write(svg)
    return svg_path
