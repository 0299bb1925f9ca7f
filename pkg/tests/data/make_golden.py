"""Regenerate the .flo golden files with struct only (no cmflow code)."""

import struct
from pathlib import Path

HERE = Path(__file__).parent


def flo_bytes(rows):
    height, width = len(rows), len(rows[0])
    out = b"PIEH" + struct.pack("<ii", width, height)
    for row in rows:
        for u, v in row:
            out += struct.pack("<ff", u, v)
    return out


GOLDEN = {
    "zero_1x1.flo": [[(0.0, 0.0)]],
    "ramp_3x2.flo": [
        [(0.0, -0.5), (1.5, 2.25), (-3.0, 4.0)],
        [(0.125, 8.0), (-16.5, 0.0), (1024.0, -0.0625)],
    ],
}

if __name__ == "__main__":
    for name, rows in GOLDEN.items():
        (HERE / name).write_bytes(flo_bytes(rows))
