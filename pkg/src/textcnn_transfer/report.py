"""Aligned text and CSV rendering of result tables."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence, Union

Cell = Union[float, tuple, str, None]

MISSING = "---"


def fmt_pct(value: float) -> str:
    return f"{value:.2f}"


@dataclass
class ReportTable:
    """Rows x columns of accuracy percentages.

    A cell is a float, a tuple of floats (rendered ``a, b``), a plain string
    (never bolded) or None for a structurally impossible run (``---``).
    Column maxima are bolded per tuple component.
    """

    title: str
    row_labels: list[str]
    col_labels: list[str]
    cells: list[list[Cell]]
    row_header: str = "Setting"
    notes: list[str] = field(default_factory=list)

    def column_max(self, col: int) -> list[float | None]:
        nums = self._numeric(col)
        width = max((len(c) if isinstance(c, tuple) else 1 for c in nums), default=0)
        out = []
        for k in range(width):
            vals = [round(v, 2) for v in (_component(c, k) for c in nums) if v is not None]
            out.append(max(vals, default=None))
        return out

    def _numeric(self, col: int) -> list:
        return [row[col] for row in self.cells if isinstance(row[col], (float, int, tuple))]

    def bold(self, row: int, col: int) -> list[bool]:
        cell = self.cells[row][col]
        if not isinstance(cell, (float, int, tuple)):
            return []
        maxima = self.column_max(col)
        parts = cell if isinstance(cell, tuple) else (cell,)
        return [m is not None and round(v, 2) == m for v, m in zip(parts, maxima)]

    def ties(self) -> list[str]:
        out = []
        for j, label in enumerate(self.col_labels):
            counts = {}
            for i in range(len(self.row_labels)):
                for k, b in enumerate(self.bold(i, j)):
                    counts[k] = counts.get(k, 0) + int(b)
            if any(n > 1 for n in counts.values()):
                out.append(label)
        return out


def _component(cell, k: int):
    if isinstance(cell, tuple):
        return cell[k] if k < len(cell) else None
    return cell if k == 0 else None


def _plain(cell: Cell) -> str:
    if cell is None:
        return MISSING
    if isinstance(cell, str):
        return cell
    if isinstance(cell, tuple):
        return ", ".join(fmt_pct(v) for v in cell)
    return fmt_pct(cell)


def _marked(table: ReportTable, i: int, j: int) -> str:
    cell = table.cells[i][j]
    if cell is None or isinstance(cell, str):
        return _plain(cell)
    parts = cell if isinstance(cell, tuple) else (cell,)
    flags = table.bold(i, j)
    return ", ".join(f"**{fmt_pct(v)}**" if b else fmt_pct(v) for v, b in zip(parts, flags))


def render_text(table: ReportTable) -> str:
    header = [table.row_header] + list(table.col_labels)
    body = [[label] + [_marked(table, i, j) for j in range(len(table.col_labels))]
            for i, label in enumerate(table.row_labels)]
    widths = [max(len(r[k]) for r in [header] + body) for k in range(len(header))]

    def line(row):
        return " | ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()

    out = [table.title, line(header), "-+-".join("-" * w for w in widths)]
    out += [line(r) for r in body]
    tied = table.ties()
    if tied:
        out.append("ties for the column maximum (all bolded): " + ", ".join(tied))
    out += table.notes
    return "\n".join(out) + "\n"


def render_csv(table: ReportTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([table.row_header] + list(table.col_labels))
    for label, row in zip(table.row_labels, table.cells):
        writer.writerow([label] + [_plain(c) for c in row])
    return buf.getvalue()


def simple_table(title: str, header: Sequence[str], rows: Sequence[Sequence[object]]) -> ReportTable:
    """Wrap generic rows (first column = label) as a table with string cells."""
    return ReportTable(title, [str(r[0]) for r in rows], [str(h) for h in header[1:]],
                       [[_as_text(v) for v in r[1:]] for r in rows], row_header=str(header[0]))


def _as_text(v: object) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}".rstrip("0").rstrip(".") if v != int(v) else f"{v:.1f}"
    return str(v)
