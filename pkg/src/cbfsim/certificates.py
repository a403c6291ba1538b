"""Computable regularity certificates.

Implements the ODE comparison threshold, the cubic blow-up time, the local
existence horizon, the robustness functional R(u) with its data-perturbation
left-hand side, the exponent-robustness integral, and the Gronwall difference
envelope.  All time integrals use trapezoidal quadrature on recorded samples.

The constants are never canonical: `unit` mode sets them all to 1 for
formula-level testing, `calibrated` mode fits them so the a-priori difference
inequality holds along a library of resolved runs with 2x headroom.  The
calibrated set is built from (c0, c1, c3, c_r) with c2 = c1 + c_r (the "+1"
integrand term plus the linear absorption shift) and c_R = (2*c3)^{-1/2}, so
that R(u) equals the comparison-lemma threshold for the fitted inequality.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .fields import SpectralField, norm_hs, pad_to, to_physical
from .integrator import DiagnosticsSeries, Trajectory


@dataclass
class CertificateConstants:
    c0: float
    c1: float
    c2: float
    c3: float
    c_r: float
    c_R: float
    mode: str

    def __post_init__(self):
        for name in ("c0", "c1", "c2", "c3", "c_r", "c_R"):
            if getattr(self, name) <= 0:
                raise ValueError(f"constant {name} must be positive")

    @classmethod
    def unit(cls) -> "CertificateConstants":
        return cls(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, mode="unit")

    def to_dict(self):
        return {
            "c0": self.c0,
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "c_r": self.c_r,
            "c_R": self.c_R,
            "mode": self.mode,
        }


@dataclass
class CertificateReport:
    r_of_u: float
    lhs: float
    margin: float
    verdict: str  # certified | not_certified
    constants: CertificateConstants
    horizon: float

    def to_dict(self):
        return {
            "r_of_u": self.r_of_u,
            "lhs": self.lhs,
            "margin": self.margin,
            "verdict": self.verdict,
            "constants": self.constants.to_dict(),
            "T": self.horizon,
        }


def ode_threshold(a: float, n_exp: int, horizon: float) -> float:
    """Comparison threshold for y' <= a y^n + delta on [0, T].

    y stays bounded whenever y(0) + int delta < [(n-1) a T]^{-1/(n-1)}; the
    bound is sharp for the equality ODE.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if n_exp <= 1:
        raise ValueError("exponent must be an integer > 1")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    return ((n_exp - 1) * a * horizon) ** (-1.0 / (n_exp - 1))


def ode_blowup_time(c: float, y0: float) -> float:
    """Blow-up time 1/(2 c y0^2) of X' = c X^3, X(0) = y0."""
    if c <= 0 or y0 <= 0:
        raise ValueError("c and y0 must be positive")
    return 1.0 / (2.0 * c * y0 ** 2)


def local_existence_horizon(h1_of_u0: float, c: float) -> float:
    """Guaranteed strong-solution horizon (4 c ||u0||_{H^1}^4)^{-1}."""
    if h1_of_u0 <= 0 or c <= 0:
        raise ValueError("inputs must be positive")
    return 1.0 / (4.0 * c * h1_of_u0 ** 4)


def integrate_comparison_ode(
    a: float,
    n_exp: int,
    y0: float,
    horizon: float,
    delta=None,
    blowup_threshold: float = 1e6,
):
    """Integrate y' = a y^n + delta(t) with dense adaptive stepping.

    Returns (ts, ys, blowup_t) where blowup_t is the first time y crosses
    blowup_threshold (None if it stays below on [0, horizon]).
    """
    rhs = (lambda t, y: a * y ** n_exp) if delta is None else (
        lambda t, y: a * y ** n_exp + delta(t)
    )

    def crossed(t, y):
        return y[0] - blowup_threshold

    crossed.terminal = True
    crossed.direction = 1.0
    sol = solve_ivp(
        rhs,
        (0.0, horizon),
        [y0],
        rtol=1e-10,
        atol=1e-12,
        dense_output=True,
        events=crossed,
        max_step=horizon / 100.0,
    )
    blowup_t = float(sol.t_events[0][0]) if len(sol.t_events[0]) else None
    return sol.t, sol.y[0], blowup_t


def _trapezoid_on_horizon(times, values, horizon):
    """Trapezoidal integral of sampled values over [t0, t0 + horizon]."""
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    t0 = times[0]
    t_stop = t0 + horizon
    if times[-1] < t_stop - 1e-9 * max(1.0, abs(t_stop)):
        raise ValueError(
            f"diagnostics cover [{t0}, {times[-1]}], need horizon {horizon}"
        )
    keep = times <= t_stop
    ts = times[keep]
    vs = values[keep]
    if ts[-1] < t_stop:  # interpolate the final partial interval
        v_end = float(np.interp(t_stop, times, values))
        ts = np.append(ts, t_stop)
        vs = np.append(vs, v_end)
    return float(np.trapezoid(vs, ts))


def robustness_integrand(diag: DiagnosticsSeries, r: float) -> np.ndarray:
    """||u||_{H^1}^4 + ||grad u|| ||Au|| + ||u||_{H^1}^{2(r-1)} + ||grad u||.

    At r = 1 the third term is identically 1 (0**0 == 1 by the literal
    convention); the constant is carried inside the integral exactly as the
    comparison argument does.
    """
    h1 = diag.column("h1")
    grad = diag.column("grad_l2")
    stokes = diag.column("stokes_l2")
    return h1 ** 4 + grad * stokes + h1 ** (2.0 * (r - 1.0)) + grad


def robustness_R(
    diag: DiagnosticsSeries, horizon: float, r: float, k: CertificateConstants
) -> float:
    """Perturbation budget R(u) = c_R exp(-c2 T) / sqrt(T) * exp(-c1 I(T))."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    integral = _trapezoid_on_horizon(
        diag.column("t"), robustness_integrand(diag, r), horizon
    )
    return (
        k.c_R
        * math.exp(-k.c2 * horizon)
        / math.sqrt(horizon)
        * math.exp(-k.c1 * integral)
    )


def robustness_lhs(
    u0: SpectralField,
    v0: SpectralField,
    f_minus_g_l2_series,
    k: CertificateConstants,
) -> float:
    """||u0 - v0||_{H^1}^2 + c0 * int ||f - g||^2 dt (trapezoidal).

    f_minus_g_l2_series is (times, l2_norms); pass None for identical forcing.
    """
    if u0.grid != v0.grid:
        raise ValueError("fields must share a grid")
    diff = SpectralField(u0.grid, u0.coeffs - v0.coeffs)
    total = norm_hs(diff, 1.0) ** 2
    if f_minus_g_l2_series is not None:
        times, norms = f_minus_g_l2_series
        forcing_term = float(
            np.trapezoid(np.asarray(norms, dtype=np.float64) ** 2, np.asarray(times))
        )
        total += k.c0 * forcing_term
    return float(total)


def certify_pair(
    run_u,
    v0: SpectralField,
    f_minus_g_l2_series,
    k: CertificateConstants,
    r: float,
    horizon: float | None = None,
) -> CertificateReport:
    """Certificate for a perturbed problem against a completed base run.

    run_u is (Trajectory, DiagnosticsSeries); the verdict is certified exactly
    when lhs < R(u) (positive margin).
    """
    traj, diag = run_u
    times = diag.column("t")
    if horizon is None:
        horizon = float(times[-1] - times[0])
    r_of_u = robustness_R(diag, horizon, r, k)
    lhs = robustness_lhs(traj.initial, v0, f_minus_g_l2_series, k)
    margin = r_of_u - lhs
    return CertificateReport(
        r_of_u=r_of_u,
        lhs=lhs,
        margin=margin,
        verdict="certified" if margin > 0 else "not_certified",
        constants=k,
        horizon=horizon,
    )


def exponent_robustness_lhs(
    traj: Trajectory, r: float, s: float, c0: float, oversample: int = 2
) -> float:
    """c0 * int_0^T ( int |u|^{2r} (|u|^{s-r} - 1)^2 dx )^{1/2} dt.

    The inner integral is evaluated by oversampled collocation quadrature at
    every snapshot; vanishes identically at s = r.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    if s < r:
        raise ValueError(f"s must be >= r, got s={s} < r={r}")
    inner = []
    for state in traj.states:
        n_big = oversample * state.grid.n
        phys = to_physical(pad_to(state, n_big)).samples
        mag = np.sqrt(phys[0] ** 2 + phys[1] ** 2 + phys[2] ** 2)
        if s == r:
            inner.append(0.0)
            continue
        cell = (2.0 * np.pi / n_big) ** 3
        integrand = mag ** (2.0 * r) * (mag ** (s - r) - 1.0) ** 2
        inner.append(math.sqrt(cell * float(np.sum(integrand))))
    return c0 * float(np.trapezoid(np.asarray(inner), np.asarray(traj.times)))


def gronwall_envelope(diag_u: DiagnosticsSeries, w0_l2: float, c: float):
    """Difference envelope ||w(t)||^2 <= ||w(0)||^2 exp(c int_0^t H2(u)^2).

    The lattice H^2 surrogate is ||u||^2 + ||Au||^2.  Returns (times, bound).
    """
    t = diag_u.column("t")
    h2_sq = diag_u.column("l2") ** 2 + diag_u.column("stokes_l2") ** 2
    cumulative = np.concatenate(
        ([0.0], np.cumsum(0.5 * np.diff(t) * (h2_sq[1:] + h2_sq[:-1])))
    )
    return t, w0_l2 ** 2 * np.exp(c * cumulative)


# ---------------------------------------------------------------------------
# Calibration of the a-priori difference inequality.


def _central_derivative(t, y):
    out = np.empty_like(y)
    out[1:-1] = (y[2:] - y[:-2]) / (t[2:] - t[:-2])
    out[0] = (y[1] - y[0]) / (t[1] - t[0])
    out[-1] = (y[-1] - y[-2]) / (t[-1] - t[-2])
    return out


def calibrate_constants(
    base_diag: DiagnosticsSeries,
    difference_series,
    r: float,
    forcing_sq_l2=None,
    headroom: float = 2.0,
    source: str = "run",
) -> CertificateConstants:
    """Fit constants so the difference inequality holds along observed runs.

    difference_series is a list of dicts with arrays over common times t:
    h1_sq (||w||_{H^1}^2), grad_sq (||grad w||^2), stokes_sq (||Aw||^2).
    The fitted inequality is

        d/dt ||w||_{H^1}^2 + ||grad w||^2 + ||Aw||^2
            <= c0 ||f-g||^2 + c1*(gamma terms)*||w||^2 + ||w||^{2r} + ||w||^6

    with c0 = c2' = c3' = 1 fixed and c1 fitted with the given headroom;
    c_r = 1 absorbs the X^r <= X^3 + X reduction, so c3 = 2, c2 = c1 + c_r
    and c_R = (2 c3)^{-1/2}.
    """
    t = base_diag.column("t")
    gamma = robustness_integrand(base_diag, r) + 1.0
    c1_needed = 0.0
    for series in difference_series:
        x = np.asarray(series["h1_sq"], dtype=np.float64)
        if np.all(x == 0.0):
            continue
        lhs = (
            _central_derivative(t, x)
            + np.asarray(series["grad_sq"], dtype=np.float64)
            + np.asarray(series["stokes_sq"], dtype=np.float64)
        )
        slack = lhs - x ** r - x ** 3
        if forcing_sq_l2 is not None:
            slack = slack - np.asarray(forcing_sq_l2, dtype=np.float64)
        denom = gamma * x
        ok = denom > 0
        if np.any(ok):
            c1_needed = max(c1_needed, float(np.max(slack[ok] / denom[ok])))
    c1 = headroom * max(c1_needed, 1.0)
    c_r = 1.0
    c3 = 2.0
    return CertificateConstants(
        c0=1.0,
        c1=c1,
        c2=c1 + c_r,
        c3=c3,
        c_r=c_r,
        c_R=1.0 / math.sqrt(2.0 * c3),
        mode=f"calibrated({source})",
    )
