"""Regenerate dagtune/_sobol_dirs.py from scipy's copy of the Joe-Kuo table.

The primitive polynomials and initial direction numbers are the published
Joe-Kuo "new-joe-kuo-6.21201" reference set. We freeze the first 128
dimensions so the sampler does not depend on scipy internals at runtime.
"""

import pathlib

import numpy as np
import scipy.stats  # noqa: F401  (forces the lazy data file to be importable)

NDIM = 128

data = np.load(
    pathlib.Path(scipy.stats.__file__).parent / "_sobol_direction_numbers.npz"
)
poly = data["poly"][:NDIM]
vinit = data["vinit"][:NDIM]

out = pathlib.Path(__file__).parent.parent / "src" / "dagtune" / "_sobol_dirs.py"

lines = [
    '"""Joe-Kuo primitive polynomials and initial direction numbers.',
    "",
    "First %d dimensions of the published new-joe-kuo-6.21201 reference set," % NDIM,
    "frozen by scripts/freeze_sobol_directions.py. POLY[j] encodes the",
    "primitive polynomial bits for dimension j+1; VINIT[j] holds its initial",
    "direction numbers m_1..m_s (s = degree of the polynomial).",
    '"""',
    "",
    "MAX_DIM = %d" % NDIM,
    "",
    "POLY = [",
]
for i in range(0, NDIM, 16):
    lines.append("    " + ", ".join(str(int(p)) for p in poly[i : i + 16]) + ",")
lines.append("]")
lines.append("")
lines.append("VINIT = [")
for j in range(NDIM):
    deg = max(int(poly[j]).bit_length() - 1, 1)
    row = [int(v) for v in vinit[j][:deg]]
    lines.append("    [%s]," % ", ".join(str(v) for v in row))
lines.append("]")
lines.append("")

out.write_text("\n".join(lines))
print("wrote", out)
