import struct

import numpy as np
import pytest

from nlsctl import io as nio
from nlsctl.spectral import ComplexField, build_grid


def test_snapshot_roundtrip_bitwise(tmp_path, rng):
    g = build_grid((1.0, 2.0), (15, 31))
    v = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    v[0, 0] = complex(np.nextafter(0.0, 1.0), -0.0)
    p = nio.write_snapshot(tmp_path / "a.nlsf", ComplexField(g, v))
    back = nio.read_snapshot(p, g)
    assert back.values.tobytes() == v.astype("<c16").tobytes()
    raw = p.read_bytes()
    assert raw[:4] == b"NLSF"
    assert struct.unpack_from("<II2Q", raw, 4) == (1, 2, 15, 31)
    assert len(raw) == 12 + 16 + 16 * v.size


def test_snapshot_rejects(tmp_path):
    g = build_grid((1.0,), 7)
    p = nio.write_snapshot(tmp_path / "b.nlsf", np.ones(7, dtype=complex))
    raw = bytearray(p.read_bytes())
    bad = tmp_path / "bad.nlsf"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(nio.SnapshotError, match="magic"):
        nio.read_snapshot(bad)
    bumped = raw.copy()
    struct.pack_into("<I", bumped, 4, 2)
    bad.write_bytes(bytes(bumped))
    with pytest.raises(nio.SnapshotError, match="version"):
        nio.read_snapshot(bad)
    bad.write_bytes(bytes(raw[:-3]))
    with pytest.raises(nio.SnapshotError, match="payload"):
        nio.read_snapshot(bad)
    bad.write_bytes(bytes(raw[:10]))
    with pytest.raises(nio.SnapshotError):
        nio.read_snapshot(bad)
    with pytest.raises(nio.SnapshotError, match="shape"):
        nio.read_snapshot(p, build_grid((1.0,), 15))
    assert isinstance(nio.read_snapshot(p, g), ComplexField)


def test_csv_roundtrip_17_digits(tmp_path, rng):
    x = rng.standard_normal(50) * 10.0 ** rng.integers(-300, 300, 50)
    p = nio.write_csv(tmp_path / "x.csv", ["i", "x", "ok"], [(i, v, v > 0) for i, v in enumerate(x)])
    head, rows = nio.read_csv(p)
    assert head == ["i", "x", "ok"]
    assert [float(r[1]) for r in rows] == list(x)
    assert rows[0][2] in ("true", "false") and rows[3][0] == "3"


def test_svg(tmp_path):
    x = np.linspace(0.1, 1.0, 20)
    p = nio.svg_line_plot(tmp_path / "p.svg", [("a<b", x, x ** 2), ("c", x, np.exp(x))],
                          title="t & u", logy=True)
    text = p.read_text()
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    assert text.count("<polyline") == 2
    assert "a&lt;b" in text and "t &amp; u" in text
    with pytest.raises(ValueError):
        nio.svg_line_plot(tmp_path / "q.svg", [("neg", x, -x)], logy=True)
