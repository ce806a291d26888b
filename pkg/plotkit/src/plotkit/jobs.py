"""Job descriptions and CSV ingestion shared by the renderers.

The consumed schemas are exactly what the synthesis CLI emits:

- heatmap CSV: region, c0..c{n-1}, value, count0..count{n-1}
- trajectory CSV: trial, step, x0..x{n-1}, mu0..mu{n-1}, region,
  action_target, action_rate
- regions CSV: kind, phase, lo0, hi0, ..., lo{n-1}, hi{n-1}
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field


class MalformedCsv(ValueError):
    """Input CSV does not match the documented schema."""


@dataclass(frozen=True)
class RegionOverlay:
    kind: str          # goal | critical | goal_augmented | critical_augmented
    phase: str
    lo: tuple
    hi: tuple


@dataclass
class PlotJob:
    """One rendering task."""

    input_csv: str
    output_path: str
    kind: str = "heatmap"              # heatmap | trajectories
    axes: tuple = ()                   # projection axes for trajectories
    overlays: list = field(default_factory=list)
    title: str | None = None


def _read_rows(path) -> tuple[list, list]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if r]
    if not rows:
        raise MalformedCsv(f"{path}: empty file")
    return rows[0], rows[1:]


def load_heatmap(path):
    """Returns (centers, values, counts) from a heatmap CSV."""
    header, rows = _read_rows(path)
    try:
        n = header.index("value") - 1
        count_cols = [header.index(f"count{i}") for i in range(n)]
        center_cols = [header.index(f"c{i}") for i in range(n)]
        vcol = header.index("value")
    except ValueError as exc:
        raise MalformedCsv(f"{path}: missing column ({exc})") from exc
    centers, values = [], []
    counts = None
    for lineno, row in enumerate(rows, start=2):
        try:
            centers.append([float(row[c]) for c in center_cols])
            values.append(float(row[vcol]))
            got = tuple(int(row[c]) for c in count_cols)
        except (ValueError, IndexError) as exc:
            raise MalformedCsv(f"{path}:{lineno}: bad row {row!r} ({exc})") from exc
        if counts is None:
            counts = got
        elif counts != got:
            raise MalformedCsv(f"{path}:{lineno}: inconsistent grid counts {got}")
    expected = 1
    for c in counts:
        expected *= c
    if len(values) != expected:
        raise MalformedCsv(
            f"{path}: {len(values)} rows but grid counts imply {expected}")
    return centers, values, counts


def load_trajectories(path):
    """Returns (dim, traces) where traces maps trial -> list of state vectors."""
    header, rows = _read_rows(path)
    if header[:2] != ["trial", "step"]:
        raise MalformedCsv(f"{path}: expected trial/step leading columns")
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    if not xcols:
        raise MalformedCsv(f"{path}: no state columns x0..")
    traces: dict[int, list] = {}
    for lineno, row in enumerate(rows, start=2):
        try:
            trial = int(row[0])
            state = [float(row[i]) for i in xcols]
        except (ValueError, IndexError) as exc:
            raise MalformedCsv(f"{path}:{lineno}: bad row {row!r} ({exc})") from exc
        traces.setdefault(trial, []).append(state)
    return len(xcols), traces


def load_regions(path) -> list[RegionOverlay]:
    header, rows = _read_rows(path)
    if header[:2] != ["kind", "phase"]:
        raise MalformedCsv(f"{path}: expected kind/phase leading columns")
    n = (len(header) - 2) // 2
    out = []
    for lineno, row in enumerate(rows, start=2):
        try:
            lo = tuple(float(row[2 + 2 * i]) for i in range(n))
            hi = tuple(float(row[3 + 2 * i]) for i in range(n))
        except (ValueError, IndexError) as exc:
            raise MalformedCsv(f"{path}:{lineno}: bad row {row!r} ({exc})") from exc
        out.append(RegionOverlay(kind=row[0], phase=row[1], lo=lo, hi=hi))
    return out
