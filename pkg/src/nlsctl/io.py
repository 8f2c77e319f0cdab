"""Snapshots, CSV exports and a small SVG line-plot writer."""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .spectral import ComplexField

MAGIC = b"NLSF"
VERSION = 1


class SnapshotError(ValueError):
    pass


def write_snapshot(path, field):
    """NLSF header (magic, u32 version, u32 dim, u64 counts) + LE float64 re/im pairs."""
    values = field.values if isinstance(field, ComplexField) else np.asarray(field, dtype=complex)
    path = Path(path)
    header = MAGIC + struct.pack("<II", VERSION, values.ndim) + struct.pack(f"<{values.ndim}Q", *values.shape)
    body = np.ascontiguousarray(values, dtype="<c16").tobytes(order="C")
    path.write_bytes(header + body)
    return path


def read_snapshot(path, grid=None):
    """Inverse of write_snapshot. Returns a ComplexField when ``grid`` is given."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise SnapshotError(f"{path}: bad magic")
    version, dim = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported snapshot version {version} (reader knows {VERSION})")
    if dim < 1 or dim > 3:
        raise SnapshotError(f"{path}: implausible dimension {dim}")
    off = 12 + 8 * dim
    if len(raw) < off:
        raise SnapshotError(f"{path}: truncated header")
    shape = struct.unpack_from(f"<{dim}Q", raw, 12)
    need = 16 * int(np.prod(shape))
    if len(raw) - off != need:
        raise SnapshotError(f"{path}: payload has {len(raw) - off} bytes, expected {need}")
    values = np.frombuffer(raw, dtype="<c16", offset=off).reshape(shape).astype(complex)
    if grid is None:
        return values
    if tuple(grid.shape) != tuple(shape):
        raise SnapshotError(f"{path}: shape {shape} does not match grid {grid.shape}")
    return ComplexField(grid, values)


def write_csv(path, columns, rows):
    """Plain CSV, floats with 17 significant digits (round-trips float64)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def read_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_monitors(path, monitors):
    cols = list(monitors.COLUMNS)
    return write_csv(path, cols, monitors.as_array())


def write_profile(path, profile):
    return write_csv(path, ["r", "q"], zip(profile.r, profile.q))


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def svg_line_plot(path, series, title="", xlabel="", ylabel="", logx=False, logy=False,
                  width=640, height=420):
    """Write a static SVG with one polyline per (label, x, y) triple."""
    pad_l, pad_r, pad_t, pad_b = 70, 20, 30, 50
    tx = np.log10 if logx else (lambda a: a)
    ty = np.log10 if logy else (lambda a: a)
    prepared = []
    for label, x, y in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logx:
            ok &= x > 0
        if logy:
            ok &= y > 0
        if np.any(ok):
            prepared.append((label, tx(x[ok]), ty(y[ok])))
    if not prepared:
        raise ValueError("nothing to plot")
    xs = np.concatenate([p[1] for p in prepared])
    ys = np.concatenate([p[2] for p in prepared])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw = width - pad_l - pad_r
    ph = height - pad_t - pad_b
    sx = lambda v: pad_l + (v - x0) / (x1 - x0) * pw
    sy = lambda v: pad_t + ph - (v - y0) / (y1 - y0) * ph
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="14">{_esc(title)}</text>',
        f'<text x="{pad_l + pw / 2}" y="{height - 10}" text-anchor="middle" font-size="12">'
        f"{_esc(xlabel)}{' (log10)' if logx else ''}</text>",
        f'<text x="14" y="{pad_t + ph / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {pad_t + ph / 2})">{_esc(ylabel)}{" (log10)" if logy else ""}</text>',
    ]
    for k in range(5):
        fx = x0 + (x1 - x0) * k / 4
        fy = y0 + (y1 - y0) * k / 4
        out.append(f'<text x="{sx(fx):.1f}" y="{pad_t + ph + 16}" text-anchor="middle" font-size="10">{fx:.3g}</text>')
        out.append(f'<text x="{pad_l - 6}" y="{sy(fy) + 3:.1f}" text-anchor="end" font-size="10">{fy:.3g}</text>')
    for i, (label, x, y) in enumerate(prepared):
        col = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{pad_l + 8}" y="{pad_t + 16 + 14 * i}" font-size="11" fill="{col}">{_esc(label)}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out))
    return Path(path)


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
