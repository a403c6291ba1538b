"""Cubic Fourier lattices for the periodic box [0, 2*pi)^3."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

#: Volume of the periodic box, fixed to side length 2*pi.
DOMAIN_VOLUME = (2.0 * np.pi) ** 3


@dataclass(frozen=True)
class Grid:
    """Collocation/wavenumber lattice with n points per dimension.

    Wavenumbers run over {-n/2, ..., n/2 - 1} in each dimension, stored in
    FFT index order.  n must be even and at least 4.
    """

    n: int

    def __post_init__(self):
        if self.n < 4 or self.n % 2 != 0:
            raise ValueError(f"grid size must be even and >= 4, got {self.n}")

    @property
    def domain_volume(self) -> float:
        return DOMAIN_VOLUME

    @property
    def spacing(self) -> float:
        return 2.0 * np.pi / self.n

    @property
    def num_points(self) -> int:
        return self.n ** 3

    @property
    def dealias_cutoff(self) -> int:
        """Largest |k_j| kept by the 2/3 rule: the largest integer < n/3.

        Quadratic products of fields supported on this cube are alias-free
        on the cube when evaluated pointwise on the n-grid.
        """
        return (self.n + 2) // 3 - 1


@lru_cache(maxsize=None)
def wavenumbers(n: int):
    """Integer wavenumbers along one axis in FFT order: [0..n/2-1, -n/2..-1]."""
    return np.fft.fftfreq(n, d=1.0 / n).astype(np.float64)


@lru_cache(maxsize=None)
def wavevectors(n: int):
    """Wavenumber component arrays (kx, ky, kz), each broadcastable to (n,n,n)."""
    k = wavenumbers(n)
    return k[:, None, None], k[None, :, None], k[None, None, :]


@lru_cache(maxsize=None)
def wavenumber_sq(n: int):
    """|k|^2 on the lattice, shape (n, n, n)."""
    kx, ky, kz = wavevectors(n)
    return kx ** 2 + ky ** 2 + kz ** 2


@lru_cache(maxsize=None)
def inv_wavenumber_sq(n: int):
    """1/|k|^2 with the k=0 entry set to 0 (projector convention)."""
    k2 = wavenumber_sq(n)
    inv = np.zeros_like(k2)
    np.divide(1.0, k2, out=inv, where=k2 > 0)
    return inv


@lru_cache(maxsize=None)
def dealias_mask(n: int):
    """Boolean 2/3-rule mask keeping max_j |k_j| <= dealias_cutoff."""
    cut = Grid(n).dealias_cutoff
    kx, ky, kz = wavevectors(n)
    return (np.abs(kx) <= cut) & (np.abs(ky) <= cut) & (np.abs(kz) <= cut)


@lru_cache(maxsize=None)
def collocation_points(n: int):
    """Collocation coordinates (x1, x2, x3), each broadcastable to (n,n,n)."""
    x = 2.0 * np.pi * np.arange(n) / n
    return x[:, None, None], x[None, :, None], x[None, None, :]
