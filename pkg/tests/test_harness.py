import hashlib
import json

import numpy as np
import pytest

from cbfsim.cli import main
from cbfsim.harness import (
    EXIT_BLOWUP,
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    EXIT_RESOLUTION,
    EXIT_SUITE_FAILED,
    SweepResult,
    SweepRow,
    emit_plot_data,
)
from cbfsim.integrator import DiagnosticsSeries


def _base_cfg(**kw):
    d = dict(n=8, mu=1.0, alpha=0.0, beta=1.0, r=3.0, t_end=0.1, dt=0.02,
             tail_tolerance=1.0,
             initial={"kind": "taylor_green", "amplitude": 0.1})
    d.update(kw)
    return d


def _write_cfg(tmp_path, payload, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def _tree_digest(root, exclude=("metadata.json",)):
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in exclude:
            out[p.relative_to(root).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


# --- simulate scenario ---------------------------------------------------------


def test_simulate_zero_data(tmp_path):
    cfg = _write_cfg(tmp_path, {"base": _base_cfg(initial={"kind": "taylor_green", "amplitude": 0.0})})
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == EXIT_OK
    diag = DiagnosticsSeries.from_csv(out / "diagnostics.csv")
    for col in ("l2", "grad_l2", "h1", "stokes_l2", "lr1"):
        assert np.all(diag.column(col) == 0.0)
    assert json.loads((out / "outcome.json").read_text())["kind"] == "completed"


def test_simulate_artifacts_and_manifest(tmp_path):
    cfg = _write_cfg(tmp_path, {"base": _base_cfg(snapshot_every=2)})
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    paths = {e["path"] for e in manifest["artifacts"]}
    assert {"config_echo.json", "diagnostics.csv", "initial.cbf", "final.cbf",
            "outcome.json"} <= paths
    assert "metadata.json" not in paths
    for entry in manifest["artifacts"]:
        blob = (out / entry["path"]).read_bytes()
        assert hashlib.sha256(blob).hexdigest() == entry["sha256"]
        assert len(blob) == entry["bytes"]


def test_simulate_deterministic_artifact_tree(tmp_path):
    cfg = _write_cfg(tmp_path, {
        "base": _base_cfg(initial={"kind": "random_divfree", "amplitude": 0.2, "seed": 7})})
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["simulate", "--config", cfg, "--out", str(out1), "--deterministic"]) == EXIT_OK
    assert main(["simulate", "--config", cfg, "--out", str(out2), "--deterministic"]) == EXIT_OK
    assert _tree_digest(out1) == _tree_digest(out2)


def test_simulate_blowup_exit_code(tmp_path):
    cfg = _write_cfg(tmp_path, {"base": _base_cfg(
        mu=1e-9, beta=0.0, r=1.0, t_end=1000.0, dt=50.0, tail_tolerance=1e9,
        initial={"kind": "taylor_green", "amplitude": 50.0})})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "out")]) == EXIT_BLOWUP


def test_simulate_resolution_exit_code(tmp_path):
    cfg = _write_cfg(tmp_path, {"base": _base_cfg(
        mu=0.05, beta=0.0, r=1.0, t_end=1.0, dt=0.02, tail_tolerance=1e-6,
        initial={"kind": "taylor_green", "amplitude": 1.0})})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "out")]) == EXIT_RESOLUTION


def test_invalid_config_exit_code(tmp_path):
    cfg = _write_cfg(tmp_path, {"base": _base_cfg(n=7)})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "out")]) == EXIT_CONFIG
    cfg2 = _write_cfg(tmp_path, {"base": _base_cfg(), "kind": "certify"}, "k.json")
    assert main(["simulate", "--config", cfg2, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    missing = str(tmp_path / "nope.json")
    assert main(["simulate", "--config", missing, "--out", str(tmp_path / "o")]) == EXIT_IO


# --- certify and sweep -----------------------------------------------------------


def test_certify_identical_pair_certified(tmp_path):
    cfg = _write_cfg(tmp_path, {
        "base": _base_cfg(t_end=0.2, initial={"kind": "taylor_green", "amplitude": 0.05}),
    })
    out = tmp_path / "out"
    assert main(["certify", "--config", cfg, "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "certificate.json").read_text())
    assert report["verdict"] == "certified"
    assert report["lhs"] == 0.0
    assert report["margin"] == report["r_of_u"]


def test_perturb_sweep_verdict_flip_and_monotone_lhs(tmp_path):
    eps = [1e-4, 1e-3, 1e-2, 0.1, 0.5, 2.0]
    cfg = _write_cfg(tmp_path, {
        "base": _base_cfg(n=16, t_end=0.3,
                          initial={"kind": "taylor_green", "amplitude": 0.05}),
        "perturbations": [{"epsilon": e, "mode": "initial"} for e in eps],
        "seed": 3,
    })
    out = tmp_path / "out"
    assert main(["perturb-sweep", "--config", cfg, "--out", str(out)]) == EXIT_OK
    sweep = json.loads((out / "sweep.json").read_text())
    rows = sweep["rows"]
    assert [r["epsilon"] for r in rows] == eps
    lhs = [r["lhs"] for r in rows]
    assert all(b >= a for a, b in zip(lhs, lhs[1:]))
    verdicts = [r["verdict"] for r in rows]
    r_of_u = rows[0]["r_of_u"]
    for row in rows:
        expected = "certified" if row["lhs"] < r_of_u else "not_certified"
        assert row["verdict"] == expected
    assert "certified" in verdicts and "not_certified" in verdicts
    flip = verdicts.index("not_certified")
    assert all(v == "not_certified" for v in verdicts[flip:])
    csv_lines = (out / "plots" / "margin_vs_epsilon.csv").read_text().splitlines()
    assert len(csv_lines) == 1 + len(eps)


def test_sweep_unsorted_epsilons_rejected(tmp_path):
    cfg = _write_cfg(tmp_path, {
        "base": _base_cfg(),
        "perturbations": [{"epsilon": 0.1}, {"epsilon": 0.01}],
    })
    assert main(["perturb-sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_forcing_mode_perturbation(tmp_path):
    cfg = _write_cfg(tmp_path, {
        "base": _base_cfg(n=16, t_end=0.2,
                          initial={"kind": "taylor_green", "amplitude": 0.05}),
        "perturbations": [{"epsilon": 0.01, "mode": "forcing"}],
    })
    out = tmp_path / "out"
    assert main(["certify", "--config", cfg, "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "certificate.json").read_text())
    assert report["lhs"] == pytest.approx(0.01 ** 2, rel=1e-6)


# --- inequality suite -------------------------------------------------------------


def test_inequality_suite_reports_known_failures(tmp_path):
    cfg = _write_cfg(tmp_path, {"inequality_samples": 20000, "seed": 1})
    out = tmp_path / "out"
    code = main(["inequality-suite", "--config", cfg, "--out", str(out)])
    assert code == EXIT_SUITE_FAILED  # the fractional-exponent bounds fail
    reports = {r["lemma_id"]: r for r in
               json.loads((out / "inequality_suite.json").read_text())}
    assert set(reports) == {"monotonicity", "difference_bound",
                            "dissipation_bracket", "grad_l6", "power_mean_fact"}
    assert reports["monotonicity"]["pass"]
    assert reports["monotonicity"]["worst_ratio"] >= 1.0  # normalized by c(r)
    assert reports["dissipation_bracket"]["pass"]
    assert reports["grad_l6"]["pass"]
    assert not reports["power_mean_fact"]["pass"]  # s = 0.5 violates the bound
    detail = json.loads((out / "inequality_suite_detail.json").read_text())
    by_r = {d["r"]: d["pass"] for d in detail["difference_bound"]}
    assert by_r[1.0] and by_r[2.0] and by_r[3.0]
    assert (out / "plots" / "inequality_worst_ratios.csv").exists()


# --- exponent sweep ---------------------------------------------------------------


def test_exponent_sweep_requires_pairs(tmp_path):
    cfg = _write_cfg(tmp_path, {"base": _base_cfg()})
    assert main(["exponent-sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_forcing_mode_validation(tmp_path):
    bad_shape = _write_cfg(tmp_path, {"base": _base_cfg(
        forcing={"kind": "steady_modes", "modes": [[[1, 0], [0.0, 0.1, 0.0]]]})},
        "bad1.json")
    assert main(["simulate", "--config", bad_shape, "--out", str(tmp_path / "o1")]) == EXIT_CONFIG
    off_lattice = _write_cfg(tmp_path, {"base": _base_cfg(
        forcing={"kind": "steady_modes", "modes": [[[5, 0, 0], [0.0, 0.1, 0.0]]]})},
        "bad2.json")
    assert main(["simulate", "--config", off_lattice, "--out", str(tmp_path / "o2")]) == EXIT_CONFIG


def test_exponent_sweep_scenario(tmp_path):
    cfg = _write_cfg(tmp_path, {
        "base": _base_cfg(n=16, t_end=0.2, r=1.0,
                          initial={"kind": "taylor_green", "amplitude": 0.5}),
        "exponent_pairs": [[1.0, 1.01], [1.0, 1.5], [1.0, 2.0]],
    })
    out = tmp_path / "out"
    assert main(["exponent-sweep", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = json.loads((out / "exponent_sweep.json").read_text())["rows"]
    values = {row["s"]: row["lhs"] for row in rows}
    assert values[1.01] < values[1.5] < values[2.0]
    lines = (out / "exponent_sweep.csv").read_text().splitlines()
    assert lines[0] == "r,s,lhs"


# --- twin run ---------------------------------------------------------------------


def test_calibrated_sweep_deterministic_tree(tmp_path):
    cfg = _write_cfg(tmp_path, {
        "base": _base_cfg(n=16, t_end=0.1, constants_mode="calibrated",
                          initial={"kind": "taylor_green", "amplitude": 0.05}),
        "perturbations": [{"epsilon": 0.01}, {"epsilon": 0.1}],
        "seed": 5,
    })
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert main(["perturb-sweep", "--config", cfg, "--out", str(out1)]) == EXIT_OK
    assert main(["perturb-sweep", "--config", cfg, "--out", str(out2)]) == EXIT_OK
    assert _tree_digest(out1) == _tree_digest(out2)


def test_shipped_scenarios_parse(tmp_path):
    import pathlib

    from cbfsim.harness import ScenarioSpec

    kinds = {
        "simulate_taylor_green.json": "simulate",
        "certified_perturbation_sweep.json": "perturb_sweep",
        "inequality_suite.json": "inequality_suite",
        "exponent_sweep.json": "exponent_sweep",
        "twin_run.json": "twin_run",
    }
    scenario_dir = pathlib.Path(__file__).resolve().parents[1] / "scenarios"
    for name, kind in kinds.items():
        payload = json.loads((scenario_dir / name).read_text())
        payload["kind"] = kind
        ScenarioSpec.from_dict(payload, tmp_path).validate()


def test_threads_flag_smoke(tmp_path):
    from cbfsim.fields import get_fft_workers, set_fft_workers

    cfg = _write_cfg(tmp_path, {"base": _base_cfg()})
    try:
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o"),
                     "--threads", "2"]) == EXIT_OK
        assert get_fft_workers() == 2
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o2"),
                     "--threads", "0"]) == EXIT_CONFIG
    finally:
        set_fft_workers(1)


def test_twin_run_scenario(tmp_path):
    cfg = _write_cfg(tmp_path, {
        "base": _base_cfg(n=8, t_end=0.08,
                          initial={"kind": "random_divfree", "amplitude": 0.3, "seed": 2})})
    out = tmp_path / "out"
    assert main(["twin-run", "--config", cfg, "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "twin_run.json").read_text())
    assert report["identical_sup_h1"] == 0.0
    assert report["dt_ratio"] < 1.0


# --- resume ------------------------------------------------------------------------


def test_resume_matches_fresh_run_bit_exact(tmp_path):
    base = _base_cfg(n=16, t_end=0.2, dt=0.02, snapshot_every=5,
                     initial={"kind": "taylor_green", "amplitude": 0.3})
    cfg = _write_cfg(tmp_path, {"base": base})
    fresh_dir = tmp_path / "fresh"
    assert main(["simulate", "--config", cfg, "--out", str(fresh_dir)]) == EXIT_OK
    mid = next(fresh_dir.glob("checkpoint_t*.cbf"))
    resume_cfg = _write_cfg(tmp_path, {"base": base, "checkpoint": str(mid)},
                            "resume.json")
    resumed_dir = tmp_path / "resumed"
    assert main(["resume", "--config", resume_cfg, "--out", str(resumed_dir)]) == EXIT_OK
    assert (resumed_dir / "final.cbf").read_bytes() == (fresh_dir / "final.cbf").read_bytes()


def test_resume_from_initial_checkpoint_matches_fresh(tmp_path):
    base = _base_cfg(n=8, t_end=0.1, dt=0.02,
                     initial={"kind": "taylor_green", "amplitude": 0.3})
    cfg = _write_cfg(tmp_path, {"base": base})
    fresh_dir = tmp_path / "fresh"
    assert main(["simulate", "--config", cfg, "--out", str(fresh_dir)]) == EXIT_OK
    resume_cfg = _write_cfg(
        tmp_path, {"base": base, "checkpoint": str(fresh_dir / "initial.cbf")},
        "resume.json")
    rerun_dir = tmp_path / "resumed"
    assert main(["resume", "--config", resume_cfg, "--out", str(rerun_dir)]) == EXIT_OK
    assert (rerun_dir / "final.cbf").read_bytes() == (fresh_dir / "final.cbf").read_bytes()


def test_resume_corrupted_magic_exit_io(tmp_path):
    base = _base_cfg()
    cfg = _write_cfg(tmp_path, {"base": base})
    fresh = tmp_path / "fresh"
    assert main(["simulate", "--config", cfg, "--out", str(fresh)]) == EXIT_OK
    bad = tmp_path / "bad.cbf"
    raw = bytearray((fresh / "final.cbf").read_bytes())
    raw[:4] = b"ZZZZ"
    bad.write_bytes(bytes(raw))
    resume_cfg = _write_cfg(tmp_path, {"base": base, "checkpoint": str(bad)}, "r.json")
    assert main(["resume", "--config", resume_cfg, "--out", str(tmp_path / "o")]) == EXIT_IO


# --- plot data --------------------------------------------------------------------


def test_emit_plot_data_empty_inputs_error(tmp_path):
    with pytest.raises(ValueError):
        emit_plot_data(SweepResult(rows=[]), tmp_path)
    assert not list(tmp_path.glob("*.csv"))


def test_emit_plot_data_single_row_diag(tmp_path):
    from cbfsim.integrator import DIAGNOSTIC_COLUMNS

    diag = DiagnosticsSeries(np.zeros((1, len(DIAGNOSTIC_COLUMNS))))
    emit_plot_data(diag, tmp_path)
    csv = tmp_path / "norms_vs_time.csv"
    assert csv.exists()
    assert len(csv.read_text().splitlines()) == 2
    assert (tmp_path / "norms_vs_time.columns.txt").exists()


def test_emit_plot_data_sweep_rows(tmp_path):
    rows = [SweepRow(0.1 * (i + 1), 0.01, 0.05, 0.04, "certified", "completed", 0.1)
            for i in range(10)]
    emit_plot_data(SweepResult(rows), tmp_path)
    lines = (tmp_path / "margin_vs_epsilon.csv").read_text().splitlines()
    assert len(lines) == 11
