"""CBF operators on the torus and executable versions of the pointwise
inequalities the absorption nonlinearity satisfies.

Operators: Leray projector, Stokes operator, convective form B(u,v) and
absorption form C_r(u,v) = P(|u|^{r-1} v).  The inequality checks return the
raw two sides so callers (tests, the inequality suite) decide tolerances.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .fields import (
    PhysicalField,
    SpectralField,
    apply_dealias,
    gradient,
    gradient_to_physical,
    pad_to,
    random_hermitian_field,
    restrict_to,
    to_physical,
    to_spectral,
    truncate_cube,
)
from .grids import DOMAIN_VOLUME, Grid, inv_wavenumber_sq, wavenumber_sq, wavevectors

LEMMA_IDS = (
    "monotonicity",
    "difference_bound",
    "dissipation_bracket",
    "grad_l6",
    "power_mean_fact",
)


@dataclass
class InequalityReport:
    """Outcome of one sampled inequality check.

    worst_ratio is oriented per lemma: the minimum lhs/bound ratio for lower
    bounds (monotonicity), the maximum lhs/rhs ratio for upper bounds
    (difference_bound, power_mean_fact), the minimum relative bracket margin
    (dissipation_bracket), and the plain maximum ratio for the empirical
    grad_l6 constant.
    """

    lemma_id: str
    samples: int
    worst_ratio: float
    certified_bound: float | None
    passed: bool

    def __post_init__(self):
        if self.lemma_id not in LEMMA_IDS:
            raise ValueError(f"unknown lemma_id {self.lemma_id!r}")

    def to_dict(self) -> dict:
        return {
            "lemma_id": self.lemma_id,
            "samples": self.samples,
            "worst_ratio": self.worst_ratio,
            "certified_bound": self.certified_bound,
            "pass": self.passed,
        }


def leray_project(u: SpectralField) -> SpectralField:
    """Remove the component parallel to k at every mode; identity at k = 0."""
    kx, ky, kz = wavevectors(u.grid.n)
    inv_k2 = inv_wavenumber_sq(u.grid.n)
    c = u.coeffs
    div = kx * c[0] + ky * c[1] + kz * c[2]
    corr = div * inv_k2
    out = np.empty_like(c)
    out[0] = c[0] - kx * corr
    out[1] = c[1] - ky * corr
    out[2] = c[2] - kz * corr
    return SpectralField(u.grid, out)


def divergence_defect(u: SpectralField) -> float:
    """max_k |k . u_hat_k|, zero (to roundoff) for divergence-free fields."""
    kx, ky, kz = wavevectors(u.grid.n)
    c = u.coeffs
    return float(np.max(np.abs(kx * c[0] + ky * c[1] + kz * c[2])))


def stokes(u: SpectralField) -> SpectralField:
    """Stokes operator: |k|^2 times the Leray projection, zero at k = 0."""
    proj = leray_project(u)
    k2 = wavenumber_sq(u.grid.n)
    return SpectralField(u.grid, k2 * proj.coeffs)


def convective(u: SpectralField, v: SpectralField, dealias: bool = True) -> SpectralField:
    """Projected convective form: P((u . grad) v), 2/3-dealiased.

    Computed pseudospectrally; exact (alias-free) on the dealias cube when
    both inputs are supported on it.
    """
    if u.grid != v.grid:
        raise ValueError("fields must share a grid")
    u_phys = to_physical(u)
    grad_v = gradient_to_physical(gradient(v), v.grid)
    advected = kernels.convective_products(u_phys.samples, grad_v)
    out = to_spectral(PhysicalField(u.grid, advected))
    if dealias:
        out = apply_dealias(out)
    return leray_project(out)


def absorption(u: SpectralField, v: SpectralField, r: float) -> SpectralField:
    """Projected absorption form: P(|u|^{r-1} v).

    The pointwise product is evaluated on a 2x zero-padded grid (exact for the
    cubic case r = 3) and Galerkin-restricted back to the original lattice.
    """
    if u.grid != v.grid:
        raise ValueError("fields must share a grid")
    if r < 1:
        raise ValueError(f"absorption exponent must be >= 1, got {r}")
    n_big = 2 * u.grid.n
    u_phys = to_physical(pad_to(u, n_big))
    v_phys = u_phys if v is u else to_physical(pad_to(v, n_big))
    prod = kernels.absorption_products(u_phys.samples, v_phys.samples, r)
    big = to_spectral(PhysicalField(Grid(n_big), prod))
    return leray_project(restrict_to(big, u.grid.n))


def absorption_pointwise(w: np.ndarray, r: float) -> np.ndarray:
    """|w|^{r-1} w for a single 3-vector, with value 0 at w = 0."""
    if r < 1:
        raise ValueError(f"absorption exponent must be >= 1, got {r}")
    w = np.asarray(w, dtype=np.float64)
    mag = np.linalg.norm(w)
    if mag == 0.0:
        return np.zeros(3)
    return mag ** (r - 1.0) * w


def monotonicity_constant(r: float) -> float:
    """Certified lower-bound constant c(r) = min(1/r, (1/4) 12^{-(r+1)/2}).

    Derived from the two-case proof of the monotonicity lower bound; validated
    against a brute-force random minimizer in the test suite before being
    relied on here.
    """
    if r < 1:
        raise ValueError(f"absorption exponent must be >= 1, got {r}")
    return min(1.0 / r, 0.25 * 12.0 ** (-(r + 1.0) / 2.0))


def monotonicity_gap(u, v, r: float):
    """(lhs, certified) with lhs = (|u|^{r-1}u - |v|^{r-1}v).(u-v) and
    certified = c(r) |u-v|^{r+1}."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = u - v
    lhs = float(np.dot(absorption_pointwise(u, r) - absorption_pointwise(v, r), w))
    certified = monotonicity_constant(r) * float(np.linalg.norm(w) ** (r + 1.0))
    return lhs, certified


def difference_bound_check(u, v, r: float):
    """(lhs, rhs) for | |u|^{r-1}u - |v|^{r-1}v | <= 2^{r-2} r (|u|^{r-1}|w| + |w|^r).

    The rhs constant is taken as stated; it is not valid for every r in (1, 2)
    (see the test suite for the documented counterexample region).
    """
    if r < 1:
        raise ValueError(f"absorption exponent must be >= 1, got {r}")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = u - v
    lhs = float(np.linalg.norm(absorption_pointwise(u, r) - absorption_pointwise(v, r)))
    nu = float(np.linalg.norm(u))
    nw = float(np.linalg.norm(w))
    rhs = 2.0 ** (r - 2.0) * r * (nu ** (r - 1.0) * nw + nw ** r)
    return lhs, rhs


def power_mean_fact(x: float, s: float):
    """(value, bound) with value = (1+x)^s / (1+x^s) and bound = 2^{s-1}.

    For s >= 1 the bound is the maximum (attained at x = 1); for s < 1 the
    stated bound is actually the minimum, so value <= bound fails there.
    """
    if x < 0 or s < 0:
        raise ValueError("x and s must be nonnegative")
    value = (1.0 + x) ** s / (1.0 + x ** s)
    return float(value), float(2.0 ** (s - 1.0))


def dissipation_bracket(u: SpectralField, r: float, oversample: int = 2):
    """(pairing, lower, upper) for the bracket lower <= <Au, C_r(u)> <= r*lower.

    pairing is computed as the quadrature of (-lap u).(|u|^{r-1} u) on an
    oversampled grid (valid since P and the Laplacian commute on the torus and
    u is divergence-free); lower is the quadrature of |grad u|^2 |u|^{r-1}.
    """
    if r < 1:
        raise ValueError(f"absorption exponent must be >= 1, got {r}")
    n_big = oversample * u.grid.n
    big = pad_to(u, n_big)
    u_phys = to_physical(big).samples
    k2 = wavenumber_sq(n_big)
    minus_lap = to_physical(SpectralField(Grid(n_big), k2 * big.coeffs)).samples
    grad_phys = gradient_to_physical(gradient(big), Grid(n_big))

    mag2 = u_phys[0] ** 2 + u_phys[1] ** 2 + u_phys[2] ** 2
    weight = mag2 ** (0.5 * (r - 1.0)) if r != 1.0 else np.ones_like(mag2)
    cell = (2.0 * np.pi / n_big) ** 3
    pairing = cell * float(np.sum(np.sum(minus_lap * u_phys, axis=0) * weight))
    grad_sq = np.sum(grad_phys ** 2, axis=(0, 1))
    lower = cell * float(np.sum(grad_sq * weight))
    return pairing, lower, r * lower


def grad_l6_ratio(u: SpectralField, oversample: int = 2) -> float:
    """||grad u||_{L^6} / ||A u||_{L^2}; scale-invariant, rejects zero fields."""
    norm_au = float(
        np.sqrt(
            DOMAIN_VOLUME
            * np.sum(wavenumber_sq(u.grid.n) ** 2 * np.abs(leray_project(u).coeffs) ** 2)
        )
    )
    if norm_au == 0.0:
        raise ValueError("zero field has no gradient ratio")
    n_big = oversample * u.grid.n
    big = pad_to(u, n_big)
    grad_phys = gradient_to_physical(gradient(big), Grid(n_big))
    grad_mag2 = np.sum(grad_phys ** 2, axis=(0, 1))
    cell = (2.0 * np.pi / n_big) ** 3
    grad_l6 = float((cell * np.sum(grad_mag2 ** 3)) ** (1.0 / 6.0))
    return grad_l6 / norm_au


def pairing_l2(u: SpectralField, v: SpectralField) -> float:
    """L^2 inner product <u, v> from the lattice sum."""
    return float(DOMAIN_VOLUME * np.sum(np.real(np.conj(u.coeffs) * v.coeffs)))


# ---------------------------------------------------------------------------
# Sampled suites over the pointwise inequalities and the field-level bracket.


def _random_vector_pairs(rng, count):
    # mix of scales so both |u| >> |w| and |u| << |w| regimes are hit
    scale_u = np.exp(rng.normal(size=(count, 1)))
    scale_v = np.exp(rng.normal(size=(count, 1)))
    u = rng.standard_normal((count, 3)) * scale_u
    v = rng.standard_normal((count, 3)) * scale_v
    return u, v


def run_monotonicity_suite(r: float, samples: int, seed: int = 0) -> InequalityReport:
    """Vectorized sweep of the monotonicity lower bound; worst_ratio is the
    minimum of lhs / |w|^{r+1} and must stay above c(r)."""
    rng = np.random.default_rng(seed)
    u, v = _random_vector_pairs(rng, samples)
    w = u - v
    nu = np.linalg.norm(u, axis=1, keepdims=True)
    nv = np.linalg.norm(v, axis=1, keepdims=True)
    nw = np.linalg.norm(w, axis=1)
    lhs = np.sum((nu ** (r - 1.0) * u - nv ** (r - 1.0) * v) * w, axis=1)
    ok = nw > 1e-12
    ratio = lhs[ok] / nw[ok] ** (r + 1.0)
    worst = float(ratio.min())
    bound = monotonicity_constant(r)
    return InequalityReport(
        lemma_id="monotonicity",
        samples=int(np.sum(ok)),
        worst_ratio=worst,
        certified_bound=bound,
        passed=bool(worst >= bound * (1.0 - 1e-12)),
    )


def run_difference_bound_suite(r: float, samples: int, seed: int = 0) -> InequalityReport:
    """Vectorized sweep of the difference bound; worst_ratio is max lhs/rhs."""
    rng = np.random.default_rng(seed)
    u, v = _random_vector_pairs(rng, samples)
    w = u - v
    nu = np.linalg.norm(u, axis=1, keepdims=True)
    nv = np.linalg.norm(v, axis=1, keepdims=True)
    nw = np.linalg.norm(w, axis=1)
    lhs = np.linalg.norm(nu ** (r - 1.0) * u - nv ** (r - 1.0) * v, axis=1)
    rhs = 2.0 ** (r - 2.0) * r * (nu[:, 0] ** (r - 1.0) * nw + nw ** r)
    ok = rhs > 0
    worst = float(np.max(lhs[ok] / rhs[ok]))
    return InequalityReport(
        lemma_id="difference_bound",
        samples=int(np.sum(ok)),
        worst_ratio=worst,
        certified_bound=1.0,
        passed=bool(worst <= 1.0 + 1e-12),
    )


def run_power_mean_suite(s_values, x_max: float = 1e3, x_count: int = 20001) -> InequalityReport:
    """Grid sweep of (1+x)^s/(1+x^s) <= 2^{s-1}; worst_ratio is max value/bound."""
    x = np.linspace(0.0, x_max, x_count)
    worst = 0.0
    for s in s_values:
        value = (1.0 + x) ** s / (1.0 + x ** s)
        worst = max(worst, float(np.max(value / 2.0 ** (s - 1.0))))
    return InequalityReport(
        lemma_id="power_mean_fact",
        samples=x_count * len(list(s_values)),
        worst_ratio=worst,
        certified_bound=1.0,
        passed=bool(worst <= 1.0 + 1e-12),
    )


def random_divfree_smooth(grid: Grid, rng, decay: float = 2.0) -> SpectralField:
    """Random spectrally-resolved divergence-free field for operator tests."""
    u = random_hermitian_field(grid, rng)
    k2 = wavenumber_sq(grid.n)
    envelope = np.zeros_like(k2)
    np.divide(1.0, (1.0 + k2) ** (decay / 2.0), out=envelope)
    u = SpectralField(grid, u.coeffs * envelope)
    u = truncate_cube(u, grid.dealias_cutoff)
    return leray_project(u)


def run_dissipation_bracket_suite(
    n: int, r_values, fields_per_r: int, seed: int = 0, tol: float = 1e-6
) -> InequalityReport:
    """Field-level bracket check on random smooth divergence-free fields.

    worst_ratio is the minimum relative margin
    min(pairing - lower, upper - pairing) / lower and must be >= -tol.
    """
    rng = np.random.default_rng(seed)
    grid = Grid(n)
    worst = np.inf
    count = 0
    for r in r_values:
        for _ in range(fields_per_r):
            u = random_divfree_smooth(grid, rng)
            pairing, lower, upper = dissipation_bracket(u, r)
            if lower <= 0:
                continue
            margin = min(pairing - lower, upper - pairing) / lower
            worst = min(worst, margin)
            count += 1
    return InequalityReport(
        lemma_id="dissipation_bracket",
        samples=count,
        worst_ratio=float(worst),
        certified_bound=0.0,
        passed=bool(worst >= -tol),
    )


def run_grad_l6_suite(n_values, fields_per_n: int, seed: int = 0) -> InequalityReport:
    """Empirical sweep of the gradient-L6 / Stokes-L2 ratio (no certified
    constant exists; the report records the observed maximum)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    count = 0
    for n in n_values:
        grid = Grid(n)
        for _ in range(fields_per_n):
            u = random_divfree_smooth(grid, rng)
            worst = max(worst, grad_l6_ratio(u))
            count += 1
    return InequalityReport(
        lemma_id="grad_l6",
        samples=count,
        worst_ratio=float(worst),
        certified_bound=None,
        passed=bool(np.isfinite(worst)),
    )


def measure_sobolev_l2r_constant(
    r_values=(1.0, 1.5, 2.0, 3.0), n: int = 16, fields: int = 50, seed: int = 7
) -> float:
    """Calibrate C_S in ||u||_{L^{2r}} <= C_S ||u||_{H^1} on random fields.

    Measured once and then asserted with 10% headroom by callers.
    """
    from .fields import norm_hs, norm_lp_spectral

    rng = np.random.default_rng(seed)
    grid = Grid(n)
    worst = 0.0
    for _ in range(fields):
        u = random_divfree_smooth(grid, rng)
        h1 = norm_hs(u, 1.0)
        if h1 == 0:
            continue
        for r in r_values:
            worst = max(worst, norm_lp_spectral(u, 2.0 * r) / h1)
    return worst
