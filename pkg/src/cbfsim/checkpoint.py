"""CBF1 binary checkpoint format.

Layout (little-endian): magic "CBF1" (4 bytes), u32 n, then five IEEE-754
64-bit values r, mu, alpha, beta, t, then 3*n^3 complex coefficients as
(real, imag) float64 pairs in row-major FFT index order, component-major.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .fields import SpectralField
from .grids import Grid

MAGIC = b"CBF1"
_HEADER = struct.Struct("<4sI5d")


class CheckpointError(Exception):
    """Raised on malformed checkpoint files."""


@dataclass
class CheckpointHeader:
    n: int
    r: float
    mu: float
    alpha: float
    beta: float
    t: float


def write_checkpoint(path, u: SpectralField, *, r, mu, alpha, beta, t) -> None:
    header = _HEADER.pack(MAGIC, u.grid.n, r, mu, alpha, beta, t)
    coeffs = np.ascontiguousarray(u.coeffs, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(coeffs.tobytes())


def read_checkpoint(path):
    """Return (SpectralField, CheckpointHeader); raises CheckpointError on
    bad magic, truncation, or impossible grid size."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, n, r, mu, alpha, beta, t = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if n < 4 or n % 2 != 0:
        raise CheckpointError(f"{path}: invalid grid size {n}")
    expected = _HEADER.size + 3 * n ** 3 * 16
    if len(raw) != expected:
        raise CheckpointError(
            f"{path}: expected {expected} bytes for n={n}, got {len(raw)}"
        )
    coeffs = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    coeffs = coeffs.reshape(3, n, n, n).astype(np.complex128)
    field = SpectralField(Grid(n), coeffs)
    return field, CheckpointHeader(n=n, r=r, mu=mu, alpha=alpha, beta=beta, t=t)
