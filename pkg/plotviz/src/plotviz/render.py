"""Render decoder benchmark figures from report CSVs.

The input format is the report written by the simulation harness: a
header line with the thirteen columns below (optionally preceded by
``#`` comment lines), one row per (decoder, SNR) measurement.  Rendering
groups rows into one series per (decoder, code_name) pair and draws
either a semilog-y BER waterfall or a -ln(BER) bar chart.

Rendering is strictly read-only on its inputs, and the series data is a
pure function of the CSV contents, so repeated invocations on the same
files produce identical series (image bytes may differ across matplotlib
versions).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

REQUIRED_COLUMNS = (
    "code_name", "n", "k", "decoder", "ebn0_db", "frames", "bit_errors",
    "frame_errors", "ber", "fer", "neg_ln_ber", "stopped_by", "seed",
)

Y_MODES = ("ber_semilog", "neg_ln_ber")


class SchemaError(ValueError):
    """A CSV does not match the report schema."""


@dataclass(frozen=True)
class PlotSpec:
    inputs: tuple
    output: Path
    y_mode: str = "ber_semilog"
    title: str = ""

    def __post_init__(self):
        object.__setattr__(self, "inputs",
                           tuple(Path(p) for p in self.inputs))
        object.__setattr__(self, "output", Path(self.output))
        if not self.inputs:
            raise ValueError("PlotSpec needs at least one input CSV")
        if self.y_mode not in Y_MODES:
            raise ValueError(f"y_mode must be one of {Y_MODES}, "
                             f"got {self.y_mode!r}")


@dataclass
class Series:
    """One (decoder, code) line: points sorted by SNR."""

    label: str
    ebn0_db: list = field(default_factory=list)
    y: list = field(default_factory=list)
    hollow: list = field(default_factory=list)  # stopped_by == "max_frames"


def read_report(path) -> list[dict]:
    """Parse one report CSV into row dicts with numeric fields converted."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    header = reader.fieldnames or []
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column '{missing[0]}' "
                          f"(expected {','.join(REQUIRED_COLUMNS)})")
    rows = []
    for i, raw in enumerate(reader, start=2):
        try:
            rows.append({
                "code_name": raw["code_name"],
                "decoder": raw["decoder"],
                "stopped_by": raw["stopped_by"],
                "ebn0_db": float(raw["ebn0_db"]),
                "ber": float(raw["ber"]),
                "neg_ln_ber": float(raw["neg_ln_ber"]),
            })
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: bad row {i}: {exc}") from None
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def build_series(rows, y_mode: str) -> list[Series]:
    """Group rows into per-(decoder, code) series, sorted by SNR.

    In either mode a zero-BER row carries no plottable value (log(0) and
    -ln(0) are undefined), so it is dropped with a console note.
    """
    by_key: dict[tuple, list] = {}
    for row in rows:
        by_key.setdefault((row["decoder"], row["code_name"]), []).append(row)

    series = []
    for (decoder, code_name), group in by_key.items():
        label = f"{decoder} ({code_name})"
        s = Series(label=label)
        for row in sorted(group, key=lambda r: r["ebn0_db"]):
            y = row["ber"] if y_mode == "ber_semilog" else row["neg_ln_ber"]
            if row["ber"] <= 0.0 or not math.isfinite(y):
                print(f"note: {label}: dropping unmeasured point at "
                      f"{row['ebn0_db']:g} dB (no bit errors observed)")
                continue
            s.ebn0_db.append(row["ebn0_db"])
            s.y.append(y)
            s.hollow.append(row["stopped_by"] == "max_frames")
        if s.ebn0_db:
            series.append(s)
    if not series:
        raise SchemaError("no plottable series (every row was empty or "
                          "zero-BER)")
    return sorted(series, key=lambda s: s.label)


def _draw_waterfall(ax, series: list[Series]) -> None:
    for i, s in enumerate(series):
        color = f"C{i % 10}"
        ax.semilogy(s.ebn0_db, s.y, "-", color=color, label=s.label)
        for x, y, hollow in zip(s.ebn0_db, s.y, s.hollow):
            ax.semilogy([x], [y], "o", color=color,
                        markerfacecolor="none" if hollow else color)
    ax.set_ylabel("BER")
    ax.grid(True, which="both", alpha=0.3)


def _draw_bars(ax, series: list[Series]) -> None:
    snrs = sorted({x for s in series for x in s.ebn0_db})
    width = 0.8 / len(series)
    for i, s in enumerate(series):
        lookup = dict(zip(s.ebn0_db, s.y))
        hollow = dict(zip(s.ebn0_db, s.hollow))
        xs = [j + (i - (len(series) - 1) / 2) * width
              for j, snr in enumerate(snrs) if snr in lookup]
        ys = [lookup[snr] for snr in snrs if snr in lookup]
        fills = ["none" if hollow[snr] else f"C{i % 10}"
                 for snr in snrs if snr in lookup]
        ax.bar(xs, ys, width=width, label=s.label, color=fills,
               edgecolor=f"C{i % 10}")
    ax.set_xticks(range(len(snrs)), [f"{s:g}" for s in snrs])
    ax.set_ylabel("-ln(BER)")
    ax.grid(True, axis="y", alpha=0.3)


def render(spec: PlotSpec) -> list[Series]:
    """Draw the figure for `spec`, write the image, return the series."""
    rows = []
    for path in spec.inputs:
        rows.extend(read_report(path))
    series = build_series(rows, spec.y_mode)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    try:
        if spec.y_mode == "ber_semilog":
            _draw_waterfall(ax, series)
        else:
            _draw_bars(ax, series)
        ax.set_xlabel("Eb/N0 (dB)")
        if spec.title:
            ax.set_title(spec.title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(spec.output)
    finally:
        plt.close(fig)
    return series
