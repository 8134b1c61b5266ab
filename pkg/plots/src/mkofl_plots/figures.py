"""Line figures rendered from simulation CSV tables.

Two figure kinds:

- fraction:     one series on a [0, 1] axis, e.g. the per-round fraction
                of trials locked on the best kernel.
- mse_compare:  one line per table column with the legend taken from the
                header row, e.g. cumulative-MSE curves of several runs.

The renderer draws exactly the numbers in the table; no metric is ever
recomputed here. SVG output is byte-deterministic for identical input
(fixed hash salt, no embedded timestamps), so re-rendering overwrites
with the same bytes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

KINDS = ("fraction", "mse_compare")
_SVG_SALT = "mkofl-plots"


class SchemaError(ValueError):
    """The CSV does not carry the columns the figure needs."""


@dataclass
class Table:
    """A rectangular numeric CSV with a header row."""

    path: str
    columns: list
    data: dict                     # column name -> list of floats

    @property
    def n_rows(self):
        return len(next(iter(self.data.values()))) if self.columns else 0

    def column(self, name):
        if name not in self.data:
            raise SchemaError(
                f"{self.path} has no {name!r} column (found: "
                f"{', '.join(self.columns)})")
        return self.data[name]


@dataclass
class FigureSpec:
    """Everything needed to render one figure from one CSV."""

    kind: str
    csv_path: str
    out_path: str | None = None    # default: <kind>.svg next to the CSV
    x_column: str = "round"
    x_label: str = "round"
    y_label: str | None = None     # per-kind default when None
    title: str | None = None
    log_y: bool = False

    def resolved_out(self):
        if self.out_path:
            return Path(self.out_path)
        return Path(self.csv_path).parent / f"{self.kind}.svg"


def read_table(path):
    """Load a headered numeric CSV into a Table.

    Rows whose width differs from the header or whose cells fail to parse
    as floats are a schema violation, not data to be repaired.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path} has a header but no data rows")
    data = {name: [] for name in header}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise SchemaError(
                f"{path}:{lineno} has {len(row)} cells, header has "
                f"{len(header)}")
        for name, cell in zip(header, row):
            try:
                data[name].append(float(cell))
            except ValueError:
                raise SchemaError(
                    f"{path}:{lineno} column {name!r}: {cell!r} is not "
                    f"a number") from None
    return Table(path=str(path), columns=header, data=data)


def build_figure(spec):
    """Construct (but do not save) the matplotlib figure for a spec."""
    if spec.kind not in KINDS:
        raise SchemaError(f"unknown figure kind {spec.kind!r}; "
                          f"choose from {KINDS}")
    table = read_table(spec.csv_path)
    x = table.column(spec.x_column)
    fig, ax = plt.subplots(figsize=(7.0, 4.2), constrained_layout=True)

    if spec.kind == "fraction":
        y = table.column("fraction")
        ax.plot(x, y, lw=1.8)
        ax.set_ylim(-0.02, 1.02)
        ax.set_ylabel(spec.y_label or "fraction")
    else:
        series = [c for c in table.columns if c != spec.x_column]
        if not series:
            raise SchemaError(
                f"{spec.csv_path} has no series columns besides "
                f"{spec.x_column!r}")
        for name in series:
            ax.plot(x, table.data[name], lw=1.4, label=name)
        ax.legend(loc="best", fontsize=8, ncols=1 if len(series) <= 6 else 2)
        ax.set_ylabel(spec.y_label or "MSE")
        if spec.log_y:
            ax.set_yscale("log")

    ax.set_xlabel(spec.x_label)
    if spec.title:
        ax.set_title(spec.title)
    ax.grid(True, alpha=0.3)
    return fig


def render(spec):
    """Render a spec to its output image; returns the written path."""
    fig = build_figure(spec)
    out = spec.resolved_out()
    fmt = out.suffix.lstrip(".").lower() or "svg"
    try:
        with plt.rc_context({"svg.hashsalt": _SVG_SALT}):
            if fmt == "svg":
                fig.savefig(out, format=fmt, metadata={"Date": None})
            else:
                fig.savefig(out, format=fmt)
    finally:
        plt.close(fig)
    return out


def plot_fraction(csv_path, out_path=None, **kwargs):
    """Selection-fraction curve: y in [0, 1] against the round counter."""
    return render(FigureSpec(kind="fraction", csv_path=str(csv_path),
                             out_path=out_path, **kwargs))


def plot_mse_compare(csv_path, out_path=None, **kwargs):
    """MSE curves, one line and one legend entry per table column."""
    return render(FigureSpec(kind="mse_compare", csv_path=str(csv_path),
                             out_path=out_path, **kwargs))
