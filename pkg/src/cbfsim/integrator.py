"""Time integration of the Galerkin-truncated CBF system.

The system in functional form is

    du/dt + mu*A u + alpha*u + B(u) + beta*C_r(u) = P f

with A the Stokes operator, B the projected convective form and C_r the
projected absorption form.  The stiff diagonal part mu*|k|^2 + alpha is
integrated exactly by a per-mode factor exp(-(mu*|k|^2 + alpha) dt); the
nonlinear part is advanced with a two-stage (midpoint) rule, giving a
second-order integrating-factor scheme that is exact when the nonlinearity
vanishes.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import read_checkpoint
from .fields import (
    SpectralField,
    apply_dealias,
    grad_norm_l2,
    norm_hs,
    norm_lp_spectral,
    pad_to,
    random_divfree_field,
    stokes_norm_l2,
    taylor_green,
    to_physical,
)
from .grids import DOMAIN_VOLUME, Grid, dealias_mask, wavenumber_sq, wavevectors
from .operators import absorption, convective, leray_project

DIAGNOSTIC_COLUMNS = (
    "step",
    "t",
    "dt",
    "l2",
    "grad_l2",
    "h1",
    "stokes_l2",
    "lr1",
    "energy_residual",
    "tail_fraction",
)

#: Relative spectral-tail energy above which a run is declared unresolved.
TAIL_TOLERANCE = 1e-6


class ConfigError(ValueError):
    """Invalid simulation configuration."""


class BlowUpError(RuntimeError):
    def __init__(self, t):
        super().__init__(f"non-finite state at t={t}")
        self.t = t


@dataclass
class ForcingSpec:
    """Body force description.

    kind "steady_modes" builds f(x) = sum_j a_j cos(k_j . x) from the mode
    list; "time_harmonic" multiplies that profile by cos(omega t).
    """

    kind: str = "none"  # none | steady_modes | time_harmonic
    modes: list = field(default_factory=list)  # [((k1,k2,k3), (a1,a2,a3)), ...]
    omega: float = 0.0

    def to_dict(self):
        return {
            "kind": self.kind,
            "modes": [[list(map(int, k)), list(map(float, a))] for k, a in self.modes],
            "omega": self.omega,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=d.get("kind", "none"),
            modes=[(tuple(k), tuple(a)) for k, a in d.get("modes", [])],
            omega=float(d.get("omega", 0.0)),
        )


@dataclass
class InitialSpec:
    kind: str = "taylor_green"  # taylor_green | random_divfree | checkpoint
    amplitude: float = 1.0
    seed: int = 0
    slope: float = 2.0
    path: str | None = None

    def to_dict(self):
        d = {"kind": self.kind, "amplitude": self.amplitude}
        if self.kind == "random_divfree":
            d.update(seed=self.seed, slope=self.slope)
        if self.kind == "checkpoint":
            d["path"] = self.path
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=d.get("kind", "taylor_green"),
            amplitude=float(d.get("amplitude", 1.0)),
            seed=int(d.get("seed", 0)),
            slope=float(d.get("slope", 2.0)),
            path=d.get("path"),
        )


@dataclass
class SimulationConfig:
    n: int
    mu: float = 1.0
    alpha: float = 0.0
    beta: float = 1.0
    r: float = 3.0
    t_end: float = 1.0
    dt: float | str = "adaptive"
    cfl: float = 0.4
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    initial: InitialSpec = field(default_factory=InitialSpec)
    dealias: bool = True
    record_every: int = 1
    snapshot_every: int = 0  # 0: snapshot only the initial and final states
    constants_mode: str = "unit"  # certificate constants: unit | calibrated
    t_start: float = 0.0  # nonzero when continuing from a checkpoint
    tail_tolerance: float = TAIL_TOLERANCE  # resolution-failure threshold

    def validate(self):
        if self.n < 4 or self.n % 2 != 0:
            raise ConfigError(f"n must be even and >= 4, got {self.n}")
        if self.mu <= 0:
            raise ConfigError("mu must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be nonnegative")
        if self.r < 1:
            raise ConfigError(f"r must be >= 1, got {self.r}")
        if self.r > 3:
            warnings.warn(
                f"r={self.r} > 3 lies in the globally regular range; "
                "certificates target r in [1, 3]",
                stacklevel=2,
            )
        if self.t_end <= self.t_start:
            raise ConfigError("t_end must exceed the start time")
        if isinstance(self.dt, str):
            if self.dt != "adaptive":
                raise ConfigError(f"dt must be positive or 'adaptive', got {self.dt!r}")
        elif self.dt <= 0:
            raise ConfigError("dt must be positive")
        if not 0 < self.cfl <= 1:
            raise ConfigError("cfl must lie in (0, 1]")
        if self.record_every < 1 or self.snapshot_every < 0:
            raise ConfigError("invalid recording cadence")
        if self.forcing.kind not in ("none", "steady_modes", "time_harmonic"):
            raise ConfigError(f"unknown forcing kind {self.forcing.kind!r}")
        if self.initial.kind not in ("taylor_green", "random_divfree", "checkpoint"):
            raise ConfigError(f"unknown initial kind {self.initial.kind!r}")
        if self.constants_mode not in ("unit", "calibrated"):
            raise ConfigError(f"unknown constants mode {self.constants_mode!r}")
        if self.tail_tolerance <= 0:
            raise ConfigError("tail_tolerance must be positive")

    def to_dict(self):
        return {
            "cbf_config_version": 1,
            "n": self.n,
            "mu": self.mu,
            "alpha": self.alpha,
            "beta": self.beta,
            "r": self.r,
            "t_end": self.t_end,
            "dt": self.dt,
            "cfl": self.cfl,
            "forcing": self.forcing.to_dict(),
            "initial": self.initial.to_dict(),
            "dealias": self.dealias,
            "record_every": self.record_every,
            "snapshot_every": self.snapshot_every,
            "constants_mode": self.constants_mode,
            "t_start": self.t_start,
            "tail_tolerance": self.tail_tolerance,
        }

    @classmethod
    def from_dict(cls, d):
        version = d.get("cbf_config_version", 1)
        if version != 1:
            raise ConfigError(f"unsupported config version {version}")
        try:
            return cls(
                n=int(d["n"]),
                mu=float(d.get("mu", 1.0)),
                alpha=float(d.get("alpha", 0.0)),
                beta=float(d.get("beta", 1.0)),
                r=float(d.get("r", 3.0)),
                t_end=float(d.get("t_end", 1.0)),
                dt=d.get("dt", "adaptive") if isinstance(d.get("dt", "adaptive"), str) else float(d["dt"]),
                cfl=float(d.get("cfl", 0.4)),
                forcing=ForcingSpec.from_dict(d.get("forcing", {})),
                initial=InitialSpec.from_dict(d.get("initial", {})),
                dealias=bool(d.get("dealias", True)),
                record_every=int(d.get("record_every", 1)),
                snapshot_every=int(d.get("snapshot_every", 0)),
                constants_mode=d.get("constants_mode", "unit"),
                t_start=float(d.get("t_start", 0.0)),
                tail_tolerance=float(d.get("tail_tolerance", TAIL_TOLERANCE)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc


@dataclass
class DiagnosticsSeries:
    """Per-record time series of norms and energy residuals.

    forcing_power holds <f, u> at the recorded times; it participates in the
    energy balance but is not part of the CSV schema.
    """

    data: np.ndarray  # (rows, len(DIAGNOSTIC_COLUMNS))
    forcing_power: np.ndarray | None = None

    def column(self, name: str) -> np.ndarray:
        return self.data[:, DIAGNOSTIC_COLUMNS.index(name)]

    def __len__(self):
        return self.data.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(DIAGNOSTIC_COLUMNS) + "\n")
            for row in self.data:
                cells = [str(int(row[0]))] + [format(v, ".17g") for v in row[1:]]
                fh.write(",".join(cells) + "\n")

    @classmethod
    def from_csv(cls, path) -> "DiagnosticsSeries":
        with open(path) as fh:
            header = fh.readline().strip()
            if header != ",".join(DIAGNOSTIC_COLUMNS):
                raise ValueError(f"unexpected diagnostics header: {header}")
            rows = [[float(c) for c in line.split(",")] for line in fh if line.strip()]
        return cls(np.asarray(rows, dtype=np.float64).reshape(-1, len(DIAGNOSTIC_COLUMNS)))


@dataclass
class Trajectory:
    times: list
    states: list  # SpectralField snapshots; first is the initial condition

    @property
    def initial(self) -> SpectralField:
        return self.states[0]

    @property
    def final(self) -> SpectralField:
        return self.states[-1]


@dataclass
class Outcome:
    kind: str  # completed | blow_up | tail_unresolved
    t: float | None = None

    @property
    def completed(self) -> bool:
        return self.kind == "completed"

    def to_dict(self):
        return {"kind": self.kind, "t": self.t}


def build_initial(cfg: SimulationConfig) -> SpectralField:
    grid = Grid(cfg.n)
    if cfg.initial.kind == "taylor_green":
        u = taylor_green(grid, cfg.initial.amplitude)
    elif cfg.initial.kind == "random_divfree":
        u = random_divfree_field(
            grid, cfg.initial.seed, cfg.initial.slope, cfg.initial.amplitude
        )
    elif cfg.initial.kind == "checkpoint":
        u, header = read_checkpoint(cfg.initial.path)
        if u.grid.n != cfg.n:
            raise ConfigError(
                f"checkpoint grid n={u.grid.n} does not match config n={cfg.n}"
            )
    else:
        raise ConfigError(f"unknown initial kind {cfg.initial.kind!r}")
    u = leray_project(u)
    if cfg.dealias:
        u = apply_dealias(u)
    return u


def build_forcing(cfg: SimulationConfig) -> SpectralField | None:
    """Spectral profile of the steady part of the forcing (None if unforced)."""
    if cfg.forcing.kind == "none":
        return None
    grid = Grid(cfg.n)
    f = SpectralField.zeros(grid)
    n = cfg.n
    for k, a in cfg.forcing.modes:
        if len(k) != 3 or len(a) != 3:
            raise ConfigError(f"forcing mode entries must be 3-vectors, got {k}, {a}")
        k = tuple(int(x) for x in k)
        if max(abs(x) for x in k) >= n // 2:
            raise ConfigError(f"forcing mode {k} outside the lattice for n={n}")
        amp = np.asarray(a, dtype=np.float64)
        idx = tuple(x % n for x in k)
        neg = tuple((-x) % n for x in k)
        f.coeffs[(slice(None),) + idx] += 0.5 * amp
        f.coeffs[(slice(None),) + neg] += 0.5 * amp
    f = leray_project(f)
    if cfg.dealias:
        f = apply_dealias(f)
    return f


class _Workspace:
    """Per-run caches: linear symbol, dealias mask, forcing, exp factors."""

    def __init__(self, cfg: SimulationConfig):
        self.cfg = cfg
        self.grid = Grid(cfg.n)
        self.linear_symbol = cfg.mu * wavenumber_sq(cfg.n) + cfg.alpha
        self.mask = dealias_mask(cfg.n) if cfg.dealias else None
        self.forcing_base = build_forcing(cfg)
        self._exp_cache = {}

    def exp_factors(self, dt: float):
        cached = self._exp_cache.get(dt)
        if cached is None:
            if len(self._exp_cache) > 8:
                self._exp_cache.clear()
            cached = (
                np.exp(-0.5 * dt * self.linear_symbol),
                np.exp(-dt * self.linear_symbol),
            )
            self._exp_cache[dt] = cached
        return cached

    def forcing_at(self, t: float):
        if self.forcing_base is None:
            return None
        if self.cfg.forcing.kind == "time_harmonic":
            return self.forcing_base.coeffs * math.cos(self.cfg.forcing.omega * t)
        return self.forcing_base.coeffs

    def nonlinear_rhs(self, u: SpectralField, t: float) -> np.ndarray:
        cfg = self.cfg
        rhs = -convective(u, u, dealias=cfg.dealias).coeffs
        if cfg.beta != 0.0:
            rhs -= cfg.beta * absorption(u, u, cfg.r).coeffs
        f = self.forcing_at(t)
        if f is not None:
            rhs += f
        if self.mask is not None:
            rhs *= self.mask
        return rhs


def step(
    u: SpectralField, t: float, dt: float, cfg: SimulationConfig, work: _Workspace | None = None
) -> SpectralField:
    """One integrating-factor midpoint step; raises BlowUpError on NaN/Inf."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if work is None:
        work = _Workspace(cfg)
    e_half, e_full = work.exp_factors(dt)
    n1 = work.nonlinear_rhs(u, t)
    mid = SpectralField(u.grid, e_half * (u.coeffs + (0.5 * dt) * n1))
    n2 = work.nonlinear_rhs(mid, t + 0.5 * dt)
    out = e_full * u.coeffs + dt * (e_half * n2)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(t + dt)
    return SpectralField(u.grid, out)


def _max_pointwise_speed(u: SpectralField) -> float:
    phys = to_physical(u).samples
    return float(np.sqrt(np.max(phys[0] ** 2 + phys[1] ** 2 + phys[2] ** 2)))


def _plan_dt(u: SpectralField, t: float, cfg: SimulationConfig) -> float:
    remaining = cfg.t_end - t
    if isinstance(cfg.dt, float) or isinstance(cfg.dt, int):
        return min(float(cfg.dt), remaining)
    speed = _max_pointwise_speed(u)
    dx = 2.0 * np.pi / cfg.n
    dt = cfg.t_end / 4.0  # mild default so degenerate states still take steps
    if speed > 0.0:
        dt = min(dt, cfg.cfl * dx / speed)
        if cfg.beta > 0.0 and cfg.r > 1.0:
            dt = min(dt, cfg.cfl / (cfg.beta * speed ** (cfg.r - 1.0)))
    return min(dt, remaining)


def _tail_fraction(u: SpectralField, cfg: SimulationConfig) -> float:
    """Energy fraction in the top third of the resolved wavenumber band."""
    n = cfg.n
    k_active = Grid(n).dealias_cutoff if cfg.dealias else n // 2
    cut = (2.0 / 3.0) * k_active
    kx, ky, kz = wavevectors(n)
    shell = (np.abs(kx) > cut) | (np.abs(ky) > cut) | (np.abs(kz) > cut)
    if cfg.dealias:
        shell &= dealias_mask(n)
    energy = np.abs(u.coeffs) ** 2
    total = float(np.sum(energy))
    if total == 0.0:
        return 0.0
    return float(np.sum(energy[:, shell]) / total)


def _dissipation_rate(cfg, l2, grad_l2, lr1):
    return (
        cfg.mu * grad_l2 ** 2
        + cfg.alpha * l2 ** 2
        + cfg.beta * lr1 ** (cfg.r + 1.0)
    )


def _forcing_power(work: _Workspace, u: SpectralField, t: float) -> float:
    f = work.forcing_at(t)
    if f is None:
        return 0.0
    return float(DOMAIN_VOLUME * np.sum(np.real(np.conj(f) * u.coeffs)))


def _norm_row(u: SpectralField, cfg: SimulationConfig, t, dt_value, step_idx) -> dict:
    l2 = float(np.sqrt(DOMAIN_VOLUME * np.sum(np.abs(u.coeffs) ** 2)))
    grad = grad_norm_l2(u)
    return {
        "step": step_idx,
        "t": t,
        "dt": dt_value,
        "l2": l2,
        "grad_l2": grad,
        "h1": float(np.hypot(l2, grad)),
        "stokes_l2": stokes_norm_l2(u),
        "lr1": norm_lp_spectral(u, cfg.r + 1.0),
        "tail_fraction": _tail_fraction(u, cfg),
    }


def _row_residual(prev: dict, row: dict, cfg: SimulationConfig, f0: float, f1: float) -> float:
    h = row["t"] - prev["t"]
    d0 = _dissipation_rate(cfg, prev["l2"], prev["grad_l2"], prev["lr1"])
    d1 = _dissipation_rate(cfg, row["l2"], row["grad_l2"], row["lr1"])
    return (
        0.5 * row["l2"] ** 2
        - 0.5 * prev["l2"] ** 2
        + 0.5 * h * (d0 + d1)
        - 0.5 * h * (f0 + f1)
    )


def simulate(cfg: SimulationConfig, initial_state: SpectralField | None = None):
    """Integrate to t_end; returns (Trajectory, DiagnosticsSeries, Outcome).

    Recording happens every record_every steps (plus the initial and final
    states); trajectory snapshots every snapshot_every steps when nonzero.
    The run stops early with a blow_up outcome on non-finite state and with
    tail_unresolved when the spectral-tail monitor trips.  initial_state
    overrides the configured initial condition and is used exactly as given
    (no reprojection), so checkpoint continuations stay bit-identical.
    """
    cfg.validate()
    if initial_state is None:
        u = build_initial(cfg)
    else:
        if initial_state.grid.n != cfg.n:
            raise ConfigError("initial state grid does not match config")
        u = initial_state.copy()
    work = _Workspace(cfg)

    t = cfg.t_start
    step_idx = 0
    rows = []
    fpowers = []
    traj_times = [t]
    traj_states = [u.copy()]
    outcome = Outcome("completed")

    def record(dt_value):
        row = _norm_row(u, cfg, t, dt_value, step_idx)
        fpower = _forcing_power(work, u, t)
        row["energy_residual"] = (
            _row_residual(rows[-1], row, cfg, fpowers[-1], fpower) if rows else 0.0
        )
        rows.append(row)
        fpowers.append(fpower)
        return row

    first = record(0.0)
    if first["tail_fraction"] > cfg.tail_tolerance:
        data = np.asarray([[first[c] for c in DIAGNOSTIC_COLUMNS]])
        return (
            Trajectory(traj_times, traj_states),
            DiagnosticsSeries(data, forcing_power=np.asarray(fpowers)),
            Outcome("tail_unresolved", t),
        )

    eps = 1e-12 * max(1.0, abs(cfg.t_end))
    while t < cfg.t_end - eps:
        dt = _plan_dt(u, t, cfg)
        if dt < eps:  # step-size collapse: treat like a blow-up, fail-stop
            outcome = Outcome("blow_up", t)
            break
        try:
            u = step(u, t, dt, cfg, work)
        except BlowUpError as exc:
            outcome = Outcome("blow_up", exc.t)
            break
        t += dt
        step_idx += 1
        at_end = t >= cfg.t_end - eps
        if step_idx % cfg.record_every == 0 or at_end:
            row = record(dt)
            if row["tail_fraction"] > cfg.tail_tolerance:
                outcome = Outcome("tail_unresolved", t)
                break
        if cfg.snapshot_every and step_idx % cfg.snapshot_every == 0 and not at_end:
            traj_times.append(t)
            traj_states.append(u.copy())

    if outcome.completed and (not traj_times or traj_times[-1] != t):
        traj_times.append(t)
        traj_states.append(u.copy())
    elif not outcome.completed and outcome.kind == "tail_unresolved":
        traj_times.append(t)
        traj_states.append(u.copy())

    data = np.asarray(
        [[row[c] for c in DIAGNOSTIC_COLUMNS] for row in rows], dtype=np.float64
    ).reshape(-1, len(DIAGNOSTIC_COLUMNS))
    diag = DiagnosticsSeries(data, forcing_power=np.asarray(fpowers))
    return Trajectory(traj_times, traj_states), diag, outcome


def energy_balance_residual(diag: DiagnosticsSeries, cfg: SimulationConfig) -> np.ndarray:
    """Signed energy-balance residual over each recording interval.

    residual_i = E(t_{i+1}) - E(t_i) + int(dissipation) - int(<f, u>) with
    trapezoidal quadrature on the recorded samples; length is len(diag) - 1.
    Forced runs need the in-memory forcing-power series (CSV round trips drop
    it, and silently assuming zero would fake a large residual).
    """
    t = diag.column("t")
    l2 = diag.column("l2")
    diss = _dissipation_rate(cfg, l2, diag.column("grad_l2"), diag.column("lr1"))
    if diag.forcing_power is not None:
        fpow = diag.forcing_power
    elif cfg.forcing.kind == "none":
        fpow = np.zeros_like(t)
    else:
        raise ValueError(
            "diagnostics lack the forcing-power series needed for a forced run"
        )
    h = np.diff(t)
    energy = 0.5 * l2 ** 2
    return np.diff(energy) + 0.5 * h * (diss[1:] + diss[:-1]) - 0.5 * h * (
        fpow[1:] + fpow[:-1]
    )


@dataclass
class PairedRunResult:
    """Lockstep integration of a base state and a perturbed state.

    difference holds arrays over the recorded times of the lockstep run:
    t, l2_sq, grad_sq, h1_sq, stokes_sq of w = u - v.  If one state fails,
    the pair stops; the partner's outcome is then "aborted" (it neither
    failed nor reached the horizon).
    """

    diag_u: DiagnosticsSeries
    diag_v: DiagnosticsSeries
    difference: dict
    outcome_u: Outcome
    outcome_v: Outcome
    u0: SpectralField
    v0: SpectralField
    u_final: SpectralField
    v_final: SpectralField

    @property
    def sup_h1_difference(self) -> float:
        return float(np.sqrt(np.max(self.difference["h1_sq"])))


def _fixed_dt_for(cfg: SimulationConfig, u: SpectralField) -> float:
    if not isinstance(cfg.dt, str):
        return float(cfg.dt)
    return _plan_dt(u, cfg.t_start, cfg)


def paired_run(
    cfg_u: SimulationConfig,
    v0: SpectralField,
    cfg_v: SimulationConfig | None = None,
) -> PairedRunResult:
    """Run the base config and a perturbed twin in lockstep with a shared
    fixed dt, recording the norms of the difference at every record step.

    The step size is derived once from the base initial state so both states
    see identical time levels.  Stops early if either state blows up.
    """
    cfg_u.validate()
    cfg_v = cfg_v if cfg_v is not None else cfg_u
    cfg_v.validate()
    if cfg_v.n != cfg_u.n:
        raise ConfigError("paired runs must share a grid")

    u = build_initial(cfg_u)
    v = leray_project(v0)
    if cfg_v.dealias:
        v = apply_dealias(v)
    work_u = _Workspace(cfg_u)
    work_v = _Workspace(cfg_v)
    dt0 = _fixed_dt_for(cfg_u, u)

    u0_copy, v0_copy = u.copy(), v.copy()
    rows_u, rows_v, fpow_u, fpow_v = [], [], [], []
    diff = {"t": [], "l2_sq": [], "grad_sq": [], "h1_sq": [], "stokes_sq": []}
    outcome_u = Outcome("completed")
    outcome_v = Outcome("completed")

    def record(t, dt_value, step_idx):
        for state, cfg, rows, fpows, work in (
            (u, cfg_u, rows_u, fpow_u, work_u),
            (v, cfg_v, rows_v, fpow_v, work_v),
        ):
            row = _norm_row(state, cfg, t, dt_value, step_idx)
            fpower = _forcing_power(work, state, t)
            row["energy_residual"] = (
                _row_residual(rows[-1], row, cfg, fpows[-1], fpower) if rows else 0.0
            )
            rows.append(row)
            fpows.append(fpower)
        w = SpectralField(u.grid, u.coeffs - v.coeffs)
        l2_sq = DOMAIN_VOLUME * float(np.sum(np.abs(w.coeffs) ** 2))
        grad_sq = grad_norm_l2(w) ** 2
        diff["t"].append(t)
        diff["l2_sq"].append(l2_sq)
        diff["grad_sq"].append(grad_sq)
        diff["h1_sq"].append(l2_sq + grad_sq)
        diff["stokes_sq"].append(stokes_norm_l2(w) ** 2)

    record(cfg_u.t_start, 0.0, 0)
    t = cfg_u.t_start
    step_idx = 0
    eps = 1e-12 * max(1.0, abs(cfg_u.t_end))
    while t < cfg_u.t_end - eps:
        dt = min(dt0, cfg_u.t_end - t)
        try:
            u = step(u, t, dt, cfg_u, work_u)
        except BlowUpError as exc:
            outcome_u = Outcome("blow_up", exc.t)
        try:
            v = step(v, t, dt, cfg_v, work_v)
        except BlowUpError as exc:
            outcome_v = Outcome("blow_up", exc.t)
        if not outcome_u.completed or not outcome_v.completed:
            break
        t += dt
        step_idx += 1
        if step_idx % cfg_u.record_every == 0 or t >= cfg_u.t_end - eps:
            record(t, dt, step_idx)
            if rows_u[-1]["tail_fraction"] > cfg_u.tail_tolerance:
                outcome_u = Outcome("tail_unresolved", t)
            if rows_v[-1]["tail_fraction"] > cfg_v.tail_tolerance:
                outcome_v = Outcome("tail_unresolved", t)
            if not outcome_u.completed or not outcome_v.completed:
                break

    reached_end = t >= cfg_u.t_end - eps
    if not reached_end:
        if outcome_u.completed:
            outcome_u = Outcome("aborted", t)
        if outcome_v.completed:
            outcome_v = Outcome("aborted", t)

    def finish(rows, fpows):
        data = np.asarray(
            [[row[c] for c in DIAGNOSTIC_COLUMNS] for row in rows], dtype=np.float64
        ).reshape(-1, len(DIAGNOSTIC_COLUMNS))
        return DiagnosticsSeries(data, forcing_power=np.asarray(fpows))

    return PairedRunResult(
        diag_u=finish(rows_u, fpow_u),
        diag_v=finish(rows_v, fpow_v),
        difference={k: np.asarray(vals) for k, vals in diff.items()},
        outcome_u=outcome_u,
        outcome_v=outcome_v,
        u0=u0_copy,
        v0=v0_copy,
        u_final=u,
        v_final=v,
    )


@dataclass
class TwinRunReport:
    dt_coarse: float
    identical_sup_h1: float
    coarse_vs_half: float
    half_vs_quarter: float
    dt_ratio: float
    grid_coarse_vs_fine: float

    def to_dict(self):
        return {
            "dt_coarse": self.dt_coarse,
            "identical_sup_h1": self.identical_sup_h1,
            "coarse_vs_half": self.coarse_vs_half,
            "half_vs_quarter": self.half_vs_quarter,
            "dt_ratio": self.dt_ratio,
            "grid_coarse_vs_fine": self.grid_coarse_vs_fine,
        }


def _sup_h1_difference(traj_a: Trajectory, traj_b: Trajectory) -> float:
    """Max H^1 difference over shared snapshot times (finer lattice wins)."""
    times_b = {round(t, 12): i for i, t in enumerate(traj_b.times)}
    worst = 0.0
    matched = 0
    for i, t in enumerate(traj_a.times):
        j = times_b.get(round(t, 12))
        if j is None:
            continue
        a, b = traj_a.states[i], traj_b.states[j]
        if a.grid.n < b.grid.n:
            a = pad_to(a, b.grid.n)
        elif b.grid.n < a.grid.n:
            b = pad_to(b, a.grid.n)
        diff = SpectralField(a.grid, a.coeffs - b.coeffs)
        worst = max(worst, norm_hs(diff, 1.0))
        matched += 1
    if matched == 0:
        raise ValueError("trajectories share no snapshot times")
    return worst


def twin_run_divergence(cfg: SimulationConfig, segments: int = 8) -> TwinRunReport:
    """Self-convergence study: dt vs dt/2 vs dt/4 and n vs 2n.

    A fixed dt dividing t_end/segments is derived from the config so all runs
    share snapshot times; differences are reported as sup-in-time H^1 norms.
    """
    cfg.validate()
    u0 = build_initial(cfg)
    span = cfg.t_end - cfg.t_start
    dt_req = _fixed_dt_for(cfg, u0)
    m = max(1, math.ceil(span / segments / dt_req))
    dt0 = span / segments / m

    def run(n, dt, snap_steps, state):
        d = cfg.to_dict()
        d.update(n=n, dt=dt, snapshot_every=snap_steps)
        c = SimulationConfig.from_dict(d)
        traj, diag, outcome = simulate(c, initial_state=state)
        if not outcome.completed:
            raise RuntimeError(f"twin run did not complete: {outcome.kind} at {outcome.t}")
        return traj

    base = run(cfg.n, dt0, m, u0)
    rerun = run(cfg.n, dt0, m, u0)
    half = run(cfg.n, dt0 / 2.0, 2 * m, u0)
    quarter = run(cfg.n, dt0 / 4.0, 4 * m, u0)
    fine = run(2 * cfg.n, dt0, m, pad_to(u0, 2 * cfg.n))

    d_ident = _sup_h1_difference(base, rerun)
    d1 = _sup_h1_difference(base, half)
    d2 = _sup_h1_difference(half, quarter)
    d_grid = _sup_h1_difference(base, fine)
    ratio = d2 / d1 if d1 > 0 else 0.0
    return TwinRunReport(
        dt_coarse=dt0,
        identical_sup_h1=d_ident,
        coarse_vs_half=d1,
        half_vs_quarter=d2,
        dt_ratio=ratio,
        grid_coarse_vs_fine=d_grid,
    )
