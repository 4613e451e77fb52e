"""Small CSV and SVG emitters shared by the CLI."""

import csv


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else v for v in row])


def heatmap_svg(path, matrix, row_labels, col_labels, title=""):
    """Dependency-free heatmap; empty cells (None) render as crosses."""
    cell = 18
    left, top = 120, 40
    rows, cols = len(row_labels), len(col_labels)
    width, height = left + cols * cell + 20, top + rows * cell + 20
    vals = [v for row in matrix for v in row if v is not None]
    lo = min(vals) if vals else 0.0
    hi = max(vals) if vals else 1.0
    span = (hi - lo) or 1.0

    def color(v):
        t = (v - lo) / span
        r = int(255 * t)
        b = int(255 * (1 - t))
        return f"rgb({r},{96},{b})"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="4" y="16" font-size="12">{title}</text>',
    ]
    for ci, cl in enumerate(col_labels):
        parts.append(
            f'<text x="{left + ci * cell + 2}" y="{top - 4}" font-size="9">{cl}</text>'
        )
    for ri, rl in enumerate(row_labels):
        y = top + ri * cell
        parts.append(f'<text x="4" y="{y + 12}" font-size="9">{rl}</text>')
        for ci in range(cols):
            x = left + ci * cell
            v = matrix[ri][ci]
            if v is None:
                parts.append(
                    f'<text x="{x + 5}" y="{y + 13}" font-size="10">&#215;</text>'
                )
            else:
                parts.append(
                    f'<rect x="{x}" y="{y}" width="{cell - 1}" height="{cell - 1}" fill="{color(v)}"/>'
                )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts) + "\n")
