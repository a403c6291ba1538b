"""Spectral and physical representations of periodic vector fields on the 3-torus.

Conventions (fixed throughout the package):

* Fourier coefficients u_hat_k = |box|^{-1} int u(x) exp(-i k.x) dx, realized
  discretely as fftn(samples)/n^3, so Parseval reads
  int |u|^2 dx = |box| * sum_k |u_hat_k|^2 with |box| = (2*pi)^3.
* The H^s norm is |box| * sum_k (1 + |k|^{2s}) |u_hat_k|^2.  Note the literal
  definition gives norm_hs(u, 0) = sqrt(2) * norm_l2(u); certificate formulas
  only ever use s = 1 where the quirk is irrelevant.
* Coefficient arrays have shape (3, n, n, n), component-major, FFT index order.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .grids import (
    DOMAIN_VOLUME,
    Grid,
    collocation_points,
    dealias_mask,
    wavenumber_sq,
    wavevectors,
)

_fft_workers = 1


def set_fft_workers(k: int) -> None:
    """Set the worker count for all transforms.

    Results are bit-identical for a fixed worker count; the default of 1 is
    the deterministic reference mode.
    """
    global _fft_workers
    if k < 1:
        raise ValueError("worker count must be >= 1")
    _fft_workers = int(k)


def get_fft_workers() -> int:
    return _fft_workers


@dataclass
class SpectralField:
    """Three-component velocity field as Fourier coefficients on the lattice."""

    grid: Grid
    coeffs: np.ndarray  # complex128, shape (3, n, n, n)

    def __post_init__(self):
        n = self.grid.n
        if self.coeffs.shape != (3, n, n, n):
            raise ValueError(
                f"coefficient array must have shape (3, {n}, {n}, {n}), "
                f"got {self.coeffs.shape}"
            )

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros((3, grid.n, grid.n, grid.n), dtype=np.complex128))


@dataclass
class PhysicalField:
    """Three-component field sampled at the n^3 collocation points."""

    grid: Grid
    samples: np.ndarray  # float64, shape (3, n, n, n)

    def __post_init__(self):
        n = self.grid.n
        if self.samples.shape != (3, n, n, n):
            raise ValueError(
                f"sample array must have shape (3, {n}, {n}, {n}), "
                f"got {self.samples.shape}"
            )


@dataclass
class NormRecord:
    """Snapshot of the standard norms of one field."""

    l2: float
    grad_l2: float
    h1: float
    stokes_l2: float
    lp: dict = field(default_factory=dict)


def to_physical(u: SpectralField) -> PhysicalField:
    """Inverse transform; real part of sum_k u_hat_k exp(i k.x) at collocation points."""
    n = u.grid.n
    samples = scipy.fft.ifftn(u.coeffs, axes=(1, 2, 3), workers=_fft_workers)
    return PhysicalField(u.grid, np.ascontiguousarray(samples.real) * n ** 3)


def to_spectral(p: PhysicalField) -> SpectralField:
    """Forward transform with the 1/n^3 normalization."""
    n = p.grid.n
    coeffs = scipy.fft.fftn(p.samples, axes=(1, 2, 3), workers=_fft_workers)
    coeffs /= n ** 3
    return SpectralField(p.grid, coeffs)


def hermitian_defect(u: SpectralField) -> float:
    """Max |u_hat_k - conj(u_hat_{-k})| over the lattice (mod-n index map)."""
    c = u.coeffs
    mirrored = np.conj(_reverse_modes(c))
    return float(np.max(np.abs(c - mirrored)))


def hermitize(u: SpectralField) -> SpectralField:
    """Symmetrize so the physical field is exactly real."""
    c = u.coeffs
    sym = 0.5 * (c + np.conj(_reverse_modes(c)))
    return SpectralField(u.grid, sym)


def _reverse_modes(c: np.ndarray) -> np.ndarray:
    # index map k -> (-k) mod n along the three lattice axes
    out = c[:, ::-1, ::-1, ::-1]
    return np.roll(out, shift=(1, 1, 1), axis=(1, 2, 3))


def norm_l2(u: SpectralField) -> float:
    return float(np.sqrt(DOMAIN_VOLUME * np.sum(np.abs(u.coeffs) ** 2)))


def grad_norm_l2(u: SpectralField) -> float:
    """L^2 norm of the gradient tensor via the lattice sum |box| sum |k|^2 |u_hat|^2."""
    k2 = wavenumber_sq(u.grid.n)
    return float(np.sqrt(DOMAIN_VOLUME * np.sum(k2 * np.abs(u.coeffs) ** 2)))


def stokes_norm_l2(u: SpectralField) -> float:
    """|box| sum |k|^4 |u_hat|^2, the L^2 norm of the Stokes operator on
    divergence-free fields."""
    k2 = wavenumber_sq(u.grid.n)
    return float(np.sqrt(DOMAIN_VOLUME * np.sum(k2 ** 2 * np.abs(u.coeffs) ** 2)))


def norm_hs(u: SpectralField, s: float) -> float:
    """Sobolev norm from the lattice sum with weight (1 + |k|^{2s})."""
    if s < 0:
        raise ValueError("s must be >= 0")
    k2 = wavenumber_sq(u.grid.n)
    weight = 1.0 + k2 ** s  # 0**0 == 1 at k=0 for s=0, by design
    return float(np.sqrt(DOMAIN_VOLUME * np.sum(weight * np.abs(u.coeffs) ** 2)))


def norm_lp(p_field: PhysicalField, p: float) -> float:
    """Collocation-quadrature L^p norm of the pointwise Euclidean magnitude."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    n = p_field.grid.n
    mag2 = np.sum(p_field.samples ** 2, axis=0)
    cell = (2.0 * np.pi / n) ** 3
    return float((cell * np.sum(mag2 ** (p / 2.0))) ** (1.0 / p))


def norm_lp_spectral(u: SpectralField, p: float, oversample: int = 2) -> float:
    """L^p norm evaluated on an oversampled collocation grid.

    Oversampling factor 2 makes the quadrature exact for quartic products of
    2/3-dealiased fields and tames aliasing for general p > 2.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    big = pad_to(u, oversample * u.grid.n) if oversample > 1 else u
    return norm_lp(to_physical(big), p)


def record_norms(u: SpectralField, lp_orders=()) -> NormRecord:
    l2 = norm_l2(u)
    grad = grad_norm_l2(u)
    rec = NormRecord(
        l2=l2,
        grad_l2=grad,
        h1=float(np.hypot(l2, grad)),
        stokes_l2=stokes_norm_l2(u),
    )
    for p in lp_orders:
        rec.lp[p] = norm_lp_spectral(u, p)
    return rec


def gradient(u: SpectralField) -> np.ndarray:
    """Spectral gradient tensor, shape (3, 3, n, n, n): [m, l] = i k_m u_hat_l.

    The Nyquist planes keep the signed wavenumber -n/2; fields evolved by the
    solver carry no Nyquist energy (the 2/3 mask removes it).
    """
    kx, ky, kz = wavevectors(u.grid.n)
    n = u.grid.n
    out = np.empty((3, 3, n, n, n), dtype=np.complex128)
    for m, km in enumerate((kx, ky, kz)):
        out[m] = 1j * km * u.coeffs
    return out


def gradient_to_physical(grad_coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse-transform a (3, 3, n, n, n) gradient tensor; returns real samples."""
    n = grid.n
    phys = scipy.fft.ifftn(grad_coeffs, axes=(2, 3, 4), workers=_fft_workers)
    return np.ascontiguousarray(phys.real) * n ** 3


def truncate_cube(u: SpectralField, m: int) -> SpectralField:
    """Zero all modes with max_j |k_j| > m (cube truncation)."""
    if m < 0:
        raise ValueError("truncation radius must be >= 0")
    kx, ky, kz = wavevectors(u.grid.n)
    keep = (np.abs(kx) <= m) & (np.abs(ky) <= m) & (np.abs(kz) <= m)
    return SpectralField(u.grid, u.coeffs * keep)


def truncate_ball(u: SpectralField, m: int) -> SpectralField:
    """Zero all modes with |k| > m (ball truncation)."""
    if m < 0:
        raise ValueError("truncation radius must be >= 0")
    keep = wavenumber_sq(u.grid.n) <= float(m) ** 2
    return SpectralField(u.grid, u.coeffs * keep)


def apply_dealias(u: SpectralField) -> SpectralField:
    return SpectralField(u.grid, u.coeffs * dealias_mask(u.grid.n))


def _mode_positions(n_small: int, n_big: int) -> np.ndarray:
    # FFT index of each small-lattice wavenumber on the big lattice
    k = np.fft.fftfreq(n_small, d=1.0 / n_small).astype(int)
    return np.mod(k, n_big)


def pad_to(u: SpectralField, n_big: int) -> SpectralField:
    """Zero-pad onto a finer lattice (same coefficients, higher resolution).

    The -n/2 Nyquist plane is copied to the big lattice's matching negative
    frequency; fields with Nyquist energy are not exactly preserved under a
    subsequent derivative, which is why evolved fields are kept Nyquist-free.
    """
    n = u.grid.n
    if n_big < n:
        raise ValueError("target lattice must be at least as fine")
    if n_big == n:
        return u.copy()
    idx = _mode_positions(n, n_big)
    out = np.zeros((3, n_big, n_big, n_big), dtype=np.complex128)
    out[np.ix_(range(3), idx, idx, idx)] = u.coeffs
    return SpectralField(Grid(n_big), out)


def restrict_to(u: SpectralField, n_small: int) -> SpectralField:
    """Galerkin-restrict onto a coarser lattice (inverse of pad_to)."""
    n = u.grid.n
    if n_small > n:
        raise ValueError("target lattice must be at most as fine")
    if n_small == n:
        return u.copy()
    idx = _mode_positions(n_small, n)
    out = u.coeffs[np.ix_(range(3), idx, idx, idx)]
    return SpectralField(Grid(n_small), np.ascontiguousarray(out))


def random_hermitian_field(grid: Grid, rng, zero_nyquist: bool = True) -> SpectralField:
    """Random complex field symmetrized so its physical samples are real.

    Nyquist planes are zeroed by default so spectral derivatives stay
    Hermitian-symmetric.
    """
    n = grid.n
    shape = (3, n, n, n)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    u = hermitize(SpectralField(grid, c))
    if zero_nyquist:
        _zero_nyquist(u.coeffs)
    return u


def _zero_nyquist(coeffs: np.ndarray) -> None:
    n = coeffs.shape[1]
    for axis in (1, 2, 3):
        sl = [slice(None)] * 4
        sl[axis] = n // 2
        coeffs[tuple(sl)] = 0.0


def random_divfree_field(
    grid: Grid,
    seed: int,
    slope: float = 2.0,
    amplitude: float = 1.0,
    max_mode: int | None = None,
) -> SpectralField:
    """Divergence-free field with spectrum |u_hat_k| ~ |k|^{-slope} and random phases.

    Supported on max_j |k_j| <= max_mode (defaults to the 2/3 cutoff) and
    normalized to the requested H^1 amplitude.
    """
    from .operators import leray_project

    rng = np.random.default_rng(seed)
    u = random_hermitian_field(grid, rng)
    k2 = wavenumber_sq(grid.n)
    decay = np.zeros_like(k2)
    np.divide(1.0, np.sqrt(k2) ** slope, out=decay, where=k2 > 0)
    u = SpectralField(grid, u.coeffs * decay)
    cut = grid.dealias_cutoff if max_mode is None else max_mode
    u = truncate_cube(u, cut)
    u = leray_project(u)
    h1 = norm_hs(u, 1.0)
    if h1 == 0.0:
        raise ValueError("degenerate random field (all modes suppressed)")
    return SpectralField(grid, u.coeffs * (amplitude / h1))


def taylor_green(grid: Grid, amplitude: float = 1.0) -> SpectralField:
    """Divergence-free Taylor-Green benchmark field.

    u = A (sin x1 cos x2 cos x3, -cos x1 sin x2 cos x3, 0).
    """
    x1, x2, x3 = collocation_points(grid.n)
    samples = np.empty((3, grid.n, grid.n, grid.n))
    samples[0] = amplitude * np.sin(x1) * np.cos(x2) * np.cos(x3)
    samples[1] = -amplitude * np.cos(x1) * np.sin(x2) * np.cos(x3)
    samples[2] = 0.0
    return to_spectral(PhysicalField(grid, samples))
