"""Scenario orchestration and on-disk artifacts.

Every scenario writes a deterministic artifact tree under its output
directory: a config echo, CSV diagnostics, JSON reports, CBF1 checkpoints and
a manifest with SHA-256 checksums.  Wall-clock timestamps are confined to
metadata.json, which is the only file excluded from the manifest.
"""

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .certificates import (
    CertificateConstants,
    calibrate_constants,
    certify_pair,
    exponent_robustness_lhs,
)
from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .fields import SpectralField, get_fft_workers, norm_hs, random_divfree_field
from .grids import DOMAIN_VOLUME, Grid
from .integrator import (
    ConfigError,
    DiagnosticsSeries,
    ForcingSpec,
    SimulationConfig,
    build_initial,
    paired_run,
    simulate,
    twin_run_divergence,
)
from .kernels import backend_name
from .operators import (
    run_difference_bound_suite,
    run_dissipation_bracket_suite,
    run_grad_l6_suite,
    run_monotonicity_suite,
    run_power_mean_suite,
)

EXIT_OK = 0
EXIT_SUITE_FAILED = 1
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_RESOLUTION = 4
EXIT_IO = 5

SCENARIO_KINDS = (
    "simulate",
    "certify",
    "perturb_sweep",
    "inequality_suite",
    "exponent_sweep",
    "twin_run",
    "resume",
)

PERTURBATION_MODES = ("initial", "forcing", "both")


@dataclass
class Perturbation:
    epsilon: float
    mode: str = "initial"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError("perturbation epsilon must be positive")
        if self.mode not in PERTURBATION_MODES:
            raise ConfigError(f"unknown perturbation mode {self.mode!r}")


@dataclass
class ScenarioSpec:
    kind: str
    base: SimulationConfig | None = None
    perturbations: list = field(default_factory=list)
    exponent_pairs: list = field(default_factory=list)
    output_dir: Path = Path(".")
    seed: int = 0
    inequality_samples: int = 100_000
    checkpoint: str | None = None
    overrides: dict = field(default_factory=dict)

    def validate(self):
        if self.kind not in SCENARIO_KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        eps = [p.epsilon for p in self.perturbations]
        if any(e2 <= e1 for e1, e2 in zip(eps, eps[1:])):
            raise ConfigError("epsilon values must be strictly increasing")
        if self.kind in ("simulate", "certify", "perturb_sweep", "exponent_sweep",
                         "twin_run"):
            if self.base is None:
                raise ConfigError(f"scenario {self.kind!r} needs a base config")
            self.base.validate()
        if self.kind == "resume" and not self.checkpoint:
            raise ConfigError("resume scenario needs a checkpoint path")
        if self.kind == "perturb_sweep" and not self.perturbations:
            raise ConfigError("perturb_sweep needs perturbations")
        if self.kind == "exponent_sweep" and not self.exponent_pairs:
            raise ConfigError("exponent_sweep needs exponent pairs")
        for r, s in self.exponent_pairs:
            if not (1 <= r <= s):
                raise ConfigError(f"exponent pair ({r}, {s}) must satisfy 1 <= r <= s")
        if self.inequality_samples < 1:
            raise ConfigError("inequality_samples must be positive")

    @classmethod
    def from_dict(cls, d, output_dir) -> "ScenarioSpec":
        kind = d.get("kind")
        if kind is None:
            raise ConfigError("scenario config must declare a kind")
        base = d.get("base")
        return cls(
            kind=kind,
            base=SimulationConfig.from_dict(base) if base is not None else None,
            perturbations=[
                Perturbation(float(p["epsilon"]), p.get("mode", "initial"))
                for p in d.get("perturbations", [])
            ],
            exponent_pairs=[(float(r), float(s)) for r, s in d.get("exponent_pairs", [])],
            output_dir=Path(output_dir),
            seed=int(d.get("seed", 0)),
            inequality_samples=int(d.get("inequality_samples", 100_000)),
            checkpoint=d.get("checkpoint"),
            overrides=d.get("overrides", {}),
        )

    def to_dict(self):
        return {
            "kind": self.kind,
            "base": self.base.to_dict() if self.base else None,
            "perturbations": [
                {"epsilon": p.epsilon, "mode": p.mode} for p in self.perturbations
            ],
            "exponent_pairs": [list(p) for p in self.exponent_pairs],
            "seed": self.seed,
            "inequality_samples": self.inequality_samples,
            "checkpoint": self.checkpoint,
            "overrides": self.overrides,
        }


@dataclass
class SweepRow:
    epsilon: float
    lhs: float
    r_of_u: float
    margin: float
    verdict: str
    simulated_outcome: str
    sup_h1_of_difference: float

    def to_dict(self):
        return self.__dict__.copy()


@dataclass
class SweepResult:
    rows: list

    def validate(self):
        eps = [row.epsilon for row in self.rows]
        if any(e2 <= e1 for e1, e2 in zip(eps, eps[1:])):
            raise ValueError("sweep rows must be ordered by epsilon")

    def to_dict(self):
        return {"rows": [row.to_dict() for row in self.rows]}


# ---------------------------------------------------------------------------
# Perturbation construction (fixed-seed, norm-calibrated).


def build_initial_perturbation(grid: Grid, epsilon: float, seed: int) -> SpectralField:
    """Divergence-free field with ||.||_{H^1} = epsilon from a fixed seed.

    Supported strictly below the spectral-tail monitor band, so perturbed
    initial data never starts in the under-resolved shell.
    """
    core = max(1, int(2.0 * grid.dealias_cutoff / 3.0))  # shell is strictly above
    return random_divfree_field(grid, seed=seed, slope=2.0, amplitude=epsilon,
                                max_mode=core)


def perturbed_forcing(cfg: SimulationConfig, epsilon: float, c0: float) -> ForcingSpec:
    """Steady single-mode forcing perturbation with c0 * int ||f-g||^2 = eps^2.

    The added profile is a * cos(x1) e2, whose L^2 norm is a sqrt(|box|/2).
    """
    span = cfg.t_end - cfg.t_start
    amp = epsilon / math.sqrt(c0 * span * DOMAIN_VOLUME / 2.0)
    modes = list(cfg.forcing.modes) + [((1, 0, 0), (0.0, amp, 0.0))]
    kind = cfg.forcing.kind if cfg.forcing.kind != "none" else "steady_modes"
    return ForcingSpec(kind=kind, modes=modes, omega=cfg.forcing.omega)


def forcing_difference_l2(cfg: SimulationConfig, epsilon: float, c0: float):
    """(times, ||f-g||_{L^2}) series matching perturbed_forcing."""
    span = cfg.t_end - cfg.t_start
    level = epsilon / math.sqrt(c0 * span)
    times = np.array([cfg.t_start, cfg.t_end])
    return times, np.array([level, level])


def make_perturbed_problem(
    cfg: SimulationConfig, u0: SpectralField, pert: Perturbation, seed: int, c0: float
):
    """Returns (v0, cfg_v, f_minus_g_series) for one perturbation row."""
    v0 = u0.copy()
    cfg_v_dict = cfg.to_dict()
    series = None
    if pert.mode in ("initial", "both"):
        bump = build_initial_perturbation(Grid(cfg.n), pert.epsilon, seed)
        v0 = SpectralField(u0.grid, u0.coeffs + bump.coeffs)
    if pert.mode in ("forcing", "both"):
        cfg_v_dict["forcing"] = perturbed_forcing(cfg, pert.epsilon, c0).to_dict()
        series = forcing_difference_l2(cfg, pert.epsilon, c0)
    return v0, SimulationConfig.from_dict(cfg_v_dict), series


# ---------------------------------------------------------------------------
# Artifact plumbing.


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path) -> Path:
    """Checksum every artifact except metadata.json (timestamps live there)."""
    entries = []
    for p in sorted(out_dir.rglob("*")):
        if not p.is_file() or p.name in ("manifest.json", "metadata.json"):
            continue
        rel = p.relative_to(out_dir).as_posix()
        entries.append({"path": rel, "sha256": _sha256(p), "bytes": p.stat().st_size})
    path = out_dir / "manifest.json"
    _write_json(path, {"artifacts": entries})
    return path


def write_metadata(out_dir: Path, spec: ScenarioSpec) -> None:
    _write_json(
        out_dir / "metadata.json",
        {
            "created_unix": time.time(),
            "cbfsim_version": __version__,
            "kernel_backend": backend_name(),
            "fft_workers": get_fft_workers(),
            "scenario_kind": spec.kind,
        },
    )


def emit_plot_data(results, out_dir) -> list:
    """Write panel CSVs (plus a sidecar column-description file) for external
    plotting; raises ValueError on empty input and writes nothing."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def panel(name, header, rows, descriptions):
        if not rows:
            raise ValueError(f"no data for panel {name}")
        path = out_dir / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(str(c) for c in row) + "\n")
        sidecar = out_dir / f"{name}.columns.txt"
        with open(sidecar, "w") as fh:
            for col, desc in zip(header, descriptions):
                fh.write(f"{col}: {desc}\n")
        written.extend([path, sidecar])

    if isinstance(results, DiagnosticsSeries):
        if len(results) == 0:
            raise ValueError("empty diagnostics")
        cols = ("t", "l2", "grad_l2", "h1", "stokes_l2", "lr1")
        rows = [
            [format(results.column(c)[i], ".17g") for c in cols]
            for i in range(len(results))
        ]
        panel(
            "norms_vs_time",
            cols,
            rows,
            (
                "time",
                "L2 norm of u",
                "L2 norm of grad u",
                "H1 norm of u",
                "L2 norm of the Stokes operator applied to u",
                "L^{r+1} norm of u",
            ),
        )
    elif isinstance(results, SweepResult):
        if not results.rows:
            raise ValueError("empty sweep")
        header = (
            "epsilon",
            "lhs",
            "r_of_u",
            "margin",
            "verdict",
            "simulated_outcome",
            "sup_h1_of_difference",
        )
        rows = [
            [
                format(r.epsilon, ".17g"),
                format(r.lhs, ".17g"),
                format(r.r_of_u, ".17g"),
                format(r.margin, ".17g"),
                r.verdict,
                r.simulated_outcome,
                format(r.sup_h1_of_difference, ".17g"),
            ]
            for r in results.rows
        ]
        panel(
            "margin_vs_epsilon",
            header,
            rows,
            (
                "perturbation size",
                "certificate left-hand side",
                "certificate budget R(u)",
                "R(u) - lhs",
                "certified / not_certified",
                "outcome of the perturbed simulation",
                "sup over time of the H1 difference between runs",
            ),
        )
    elif isinstance(results, list) and results and hasattr(results[0], "lemma_id"):
        rows = [
            [
                rep.lemma_id,
                rep.samples,
                format(rep.worst_ratio, ".17g"),
                "" if rep.certified_bound is None else format(rep.certified_bound, ".17g"),
                rep.passed,
            ]
            for rep in results
        ]
        panel(
            "inequality_worst_ratios",
            ("lemma_id", "samples", "worst_ratio", "certified_bound", "pass"),
            rows,
            (
                "which inequality",
                "sample count",
                "worst observed ratio (orientation per lemma)",
                "certified bound when one exists",
                "whether the certified bound held",
            ),
        )
    else:
        raise ValueError(f"cannot emit plot data for {type(results).__name__}")
    return written


# ---------------------------------------------------------------------------
# Constants resolution (unit vs calibrated).


def resolve_constants(cfg: SimulationConfig, seed: int = 0) -> CertificateConstants:
    """Unit constants, or constants calibrated on small perturbed twins of the
    base problem (2x headroom) when the config requests it.

    Calibration perturbations are restricted to low modes (steep spectrum) so
    the recorded difference series resolves its own decay; broadband bumps
    decay faster than any record grid and would only inflate the fitted
    constant through finite-difference error.
    """
    if cfg.constants_mode == "unit":
        return CertificateConstants.unit()
    u0 = build_initial(cfg)
    h1 = norm_hs(u0, 1.0)
    scale = h1 if h1 > 0 else 1.0
    series = []
    diag_u = None
    for i, rel in enumerate((1e-3, 1e-2)):
        bump = random_divfree_field(
            Grid(cfg.n), seed=seed + 101 + i, slope=3.0,
            amplitude=rel * scale, max_mode=2,
        )
        v0 = SpectralField(u0.grid, u0.coeffs + bump.coeffs)
        pair = paired_run(cfg, v0)
        if not (pair.outcome_u.completed and pair.outcome_v.completed):
            raise RuntimeError("calibration run did not complete")
        diag_u = pair.diag_u
        series.append(pair.difference)
    return calibrate_constants(diag_u, series, cfg.r, source=f"seed{seed}")


# ---------------------------------------------------------------------------
# Scenario runners.


def _write_run_artifacts(out_dir: Path, cfg, traj, diag, outcome, prefix=""):
    diag.to_csv(out_dir / f"{prefix}diagnostics.csv")
    meta = dict(r=cfg.r, mu=cfg.mu, alpha=cfg.alpha, beta=cfg.beta)
    write_checkpoint(out_dir / f"{prefix}initial.cbf", traj.initial,
                     t=traj.times[0], **meta)
    write_checkpoint(out_dir / f"{prefix}final.cbf", traj.final,
                     t=traj.times[-1], **meta)
    _write_json(out_dir / f"{prefix}outcome.json", outcome.to_dict())


def _run_simulate(spec: ScenarioSpec, out_dir: Path) -> int:
    cfg = spec.base
    traj, diag, outcome = simulate(cfg)
    _write_run_artifacts(out_dir, cfg, traj, diag, outcome)
    if cfg.snapshot_every:
        meta = dict(r=cfg.r, mu=cfg.mu, alpha=cfg.alpha, beta=cfg.beta)
        for t, state in zip(traj.times[1:-1], traj.states[1:-1]):
            write_checkpoint(out_dir / f"checkpoint_t{t:.12f}.cbf", state, t=t, **meta)
    emit_plot_data(diag, out_dir / "plots")
    if outcome.kind == "blow_up":
        return EXIT_BLOWUP
    if outcome.kind == "tail_unresolved":
        return EXIT_RESOLUTION
    return EXIT_OK


def _run_certify(spec: ScenarioSpec, out_dir: Path) -> int:
    cfg = spec.base
    constants = resolve_constants(cfg, spec.seed)
    traj, diag, outcome = simulate(cfg)
    _write_run_artifacts(out_dir, cfg, traj, diag, outcome)
    emit_plot_data(diag, out_dir / "plots")
    if not outcome.completed:
        return EXIT_BLOWUP if outcome.kind == "blow_up" else EXIT_RESOLUTION
    if spec.perturbations:
        v0, cfg_v, series = make_perturbed_problem(
            cfg, traj.initial, spec.perturbations[0], spec.seed, constants.c0
        )
    else:  # identical pair: same data, same forcing
        v0, series = traj.initial, None
    report = certify_pair((traj, diag), v0, series, constants, cfg.r)
    _write_json(out_dir / "certificate.json", report.to_dict())
    return EXIT_OK


def _run_perturb_sweep(spec: ScenarioSpec, out_dir: Path) -> int:
    cfg = spec.base
    constants = resolve_constants(cfg, spec.seed)
    traj, diag, outcome = simulate(cfg)
    _write_run_artifacts(out_dir, cfg, traj, diag, outcome)
    emit_plot_data(diag, out_dir / "plots")
    if not outcome.completed:
        return EXIT_BLOWUP if outcome.kind == "blow_up" else EXIT_RESOLUTION
    rows = []
    for pert in spec.perturbations:
        v0, cfg_v, series = make_perturbed_problem(
            cfg, traj.initial, pert, spec.seed, constants.c0
        )
        report = certify_pair((traj, diag), v0, series, constants, cfg.r)
        pair = paired_run(cfg, v0, cfg_v)
        rows.append(
            SweepRow(
                epsilon=pert.epsilon,
                lhs=report.lhs,
                r_of_u=report.r_of_u,
                margin=report.margin,
                verdict=report.verdict,
                simulated_outcome=pair.outcome_v.kind,
                sup_h1_of_difference=pair.sup_h1_difference,
            )
        )
    sweep = SweepResult(rows)
    sweep.validate()
    _write_json(out_dir / "sweep.json",
                {"constants": constants.to_dict(), **sweep.to_dict()})
    emit_plot_data(sweep, out_dir / "plots")
    return EXIT_OK


INEQUALITY_EXPONENTS = (1.0, 1.5, 2.0, 3.0)


def _run_inequality_suite(spec: ScenarioSpec, out_dir: Path) -> int:
    """One aggregated InequalityReport per check (five in total).

    The two pointwise sweeps run per exponent; their ratios are normalized by
    the per-exponent certified bound so one report covers all exponents, and
    the per-exponent breakdown goes to a detail file.
    """
    from .operators import InequalityReport

    samples = spec.inequality_samples
    detail = {"monotonicity": [], "difference_bound": []}

    mono_runs = [run_monotonicity_suite(r, samples, seed=spec.seed)
                 for r in INEQUALITY_EXPONENTS]
    detail["monotonicity"] = [
        {"r": r, **rep.to_dict()} for r, rep in zip(INEQUALITY_EXPONENTS, mono_runs)
    ]
    mono = InequalityReport(
        lemma_id="monotonicity",
        samples=sum(rep.samples for rep in mono_runs),
        worst_ratio=min(rep.worst_ratio / rep.certified_bound for rep in mono_runs),
        certified_bound=1.0,
        passed=all(rep.passed for rep in mono_runs),
    )

    diff_runs = [run_difference_bound_suite(r, samples, seed=spec.seed + 1)
                 for r in INEQUALITY_EXPONENTS]
    detail["difference_bound"] = [
        {"r": r, **rep.to_dict()} for r, rep in zip(INEQUALITY_EXPONENTS, diff_runs)
    ]
    diff = InequalityReport(
        lemma_id="difference_bound",
        samples=sum(rep.samples for rep in diff_runs),
        worst_ratio=max(rep.worst_ratio for rep in diff_runs),
        certified_bound=1.0,
        passed=all(rep.passed for rep in diff_runs),
    )

    reports = [
        mono,
        diff,
        run_dissipation_bracket_suite(
            n=16, r_values=(1.0, 2.0, 3.0),
            fields_per_r=max(2, min(20, samples // 5000)), seed=spec.seed + 2,
        ),
        run_grad_l6_suite(n_values=(8, 16),
                          fields_per_n=max(2, min(20, samples // 5000)),
                          seed=spec.seed + 3),
        run_power_mean_suite(s_values=tuple(r - 1.0 for r in INEQUALITY_EXPONENTS)),
    ]
    _write_json(out_dir / "inequality_suite.json", [rep.to_dict() for rep in reports])
    _write_json(out_dir / "inequality_suite_detail.json", detail)
    emit_plot_data(reports, out_dir / "plots")
    return EXIT_OK if all(rep.passed for rep in reports) else EXIT_SUITE_FAILED


def _run_exponent_sweep(spec: ScenarioSpec, out_dir: Path) -> int:
    cfg = spec.base
    if cfg.snapshot_every == 0:
        d = cfg.to_dict()
        d["snapshot_every"] = cfg.record_every
        cfg = SimulationConfig.from_dict(d)
    traj, diag, outcome = simulate(cfg)
    _write_run_artifacts(out_dir, cfg, traj, diag, outcome)
    if not outcome.completed:
        return EXIT_BLOWUP if outcome.kind == "blow_up" else EXIT_RESOLUTION
    rows = []
    for r, s in spec.exponent_pairs:
        value = exponent_robustness_lhs(traj, r, s, c0=1.0)
        rows.append({"r": r, "s": s, "lhs": value})
    _write_json(out_dir / "exponent_sweep.json", {"rows": rows})
    with open(out_dir / "exponent_sweep.csv", "w", newline="") as fh:
        fh.write("r,s,lhs\n")
        for row in rows:
            fh.write(f"{row['r']},{row['s']},{format(row['lhs'], '.17g')}\n")
    return EXIT_OK


def _run_twin(spec: ScenarioSpec, out_dir: Path) -> int:
    report = twin_run_divergence(spec.base)
    _write_json(out_dir / "twin_run.json", report.to_dict())
    return EXIT_OK


def resume(checkpoint_path, cfg_overrides=None, base: SimulationConfig | None = None):
    """Continue a run from a CBF1 checkpoint.

    Physics parameters default to the checkpoint header; overrides (and an
    optional base config for solver settings) are merged on top.  Returns the
    same triple as simulate().
    """
    state, header = read_checkpoint(checkpoint_path)
    d = base.to_dict() if base is not None else SimulationConfig(n=header.n).to_dict()
    d.update(
        n=header.n,
        r=header.r,
        mu=header.mu,
        alpha=header.alpha,
        beta=header.beta,
        t_start=header.t,
    )
    d["initial"] = {"kind": "checkpoint", "path": str(checkpoint_path)}
    if cfg_overrides:
        d.update(cfg_overrides)
    cfg = SimulationConfig.from_dict(d)
    traj, diag, outcome = simulate(cfg, initial_state=state)
    return cfg, traj, diag, outcome


def _run_resume(spec: ScenarioSpec, out_dir: Path) -> int:
    cfg, traj, diag, outcome = resume(spec.checkpoint, spec.overrides, spec.base)
    _write_run_artifacts(out_dir, cfg, traj, diag, outcome)
    emit_plot_data(diag, out_dir / "plots")
    if outcome.kind == "blow_up":
        return EXIT_BLOWUP
    if outcome.kind == "tail_unresolved":
        return EXIT_RESOLUTION
    return EXIT_OK


_RUNNERS = {
    "simulate": _run_simulate,
    "certify": _run_certify,
    "perturb_sweep": _run_perturb_sweep,
    "inequality_suite": _run_inequality_suite,
    "exponent_sweep": _run_exponent_sweep,
    "twin_run": _run_twin,
    "resume": _run_resume,
}


def run_scenario(spec: ScenarioSpec) -> int:
    """Execute one scenario; returns the process exit code.

    0 success, 1 inequality suite failed, 2 invalid config, 3 blow-up,
    4 resolution failure, 5 I/O error.
    """
    try:
        spec.validate()
    except ConfigError as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG
    out_dir = Path(spec.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "config_echo.json", spec.to_dict())
        code = _RUNNERS[spec.kind](spec, out_dir)
        write_metadata(out_dir, spec)
        write_manifest(out_dir)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}")
        return EXIT_IO
    except OSError as exc:
        print(f"io error: {exc}")
        return EXIT_IO
