import json
import math

import numpy as np
import pytest

import main as cli
from conftest import analytic_heat_mode, base_config, heat_workspace, merged, read_csv, unit_state
from commands.convergence import convergence_table
from commands.schema import parse_config
from fields.checks import identity_suite
from fields.models import truncate
from fields.registry import burgers, compat_pair
from galerkin.assembly import AssemblyWorkspace
from galerkin.monitors import hminus1_bound_holds
from geometry.basis import build_basis, dealiased_resolution
from geometry.manifolds import ManifoldSpec, build_grid
from integrate.solver import SolverConfig, solve
from spectral.ops import project
from stochastic.checks import holder_half_check, ito_isometry_check, ou_moment_check, strong_error_vs_ou, strong_order_check
from stochastic.ensemble import EnsembleConfig, run_ensemble


def _torus1_workspace(model, n, eps=0.0):
    spec = ManifoldSpec.torus1()
    grid = build_grid(spec, dealiased_resolution(spec, n))
    return AssemblyWorkspace(build_basis(spec, grid, n), model(grid), eps)


@pytest.mark.integration
def test_identity_suite_on_all_manifolds(any_grid):
    basis = build_basis(any_grid.spec, any_grid, 9)
    reports = identity_suite(basis, seed=3, trials=5)
    for report in reports:
        assert report.passed, f"{report.name} residual {report.value:.3e}"
        assert report.value <= 1e-8


@pytest.mark.integration
@pytest.mark.parametrize("kind, resolution, mu", [("torus1", 32, 1.0), ("sphere2", 16, 2.0)])
def test_heat_exactness(write_config, out_dir, kind, resolution, mu):
    path = write_config(manifold={"kind": kind, "resolution": resolution}, solver={"n": 4, "output_stride": 1000})
    assert cli.main(["solve", "--config", str(path), "--out", str(out_dir)]) == 0
    header, monitors = read_csv(out_dir / "monitors.csv")
    assert monitors[-1, header.index("t")] == 1.0
    assert abs(monitors[-1, header.index("L2")] - analytic_heat_mode(mu, 1.0)) <= 1e-8


@pytest.mark.integration
@pytest.mark.parametrize("model", ["heat", "burgers"])
def test_energy_monitors_hold(torus1_grid, model):
    if model == "heat":
        ws = heat_workspace(torus1_grid, 9)
    else:
        ws = _torus1_workspace(burgers, 16)
    u0 = project(ws.basis, 0.5 * np.sin(ws.grid.nodes[:, 0]) + 0.2 * np.cos(2.0 * ws.grid.nodes[:, 0]))
    run = solve(ws, u0, SolverConfig(dt=1e-3, T=1.0, output_stride=50))
    assert run.ledger.max_residual <= 1e-4 * (1.0 + float(u0.coeffs @ u0.coeffs))
    report = hminus1_bound_holds(run.ledger)
    assert np.isfinite(report.value)
    assert report.passed


@pytest.mark.integration
def test_maximum_principle_for_truncated_compatible_model():
    ws = _torus1_workspace(lambda grid: truncate(compat_pair(grid)), 16, eps=1e-2)
    u0 = project(ws.basis, 0.5 + 0.4 * np.cos(ws.grid.nodes[:, 0]))
    run = solve(ws, u0, SolverConfig(dt=5e-3, T=1.0, output_stride=1))
    lows = np.array([row.min_u for row in run.monitors])
    highs = np.array([row.max_u for row in run.monitors])
    assert lows.min() >= -1e-6
    assert highs.max() <= 1.0 + 1e-6
    # the range contracts towards the mean
    assert highs[-1] - lows[-1] < highs[0] - lows[0]


@pytest.mark.integration
@pytest.mark.slow
def test_burgers_self_convergence():
    config = parse_config(
        merged(
            base_config(),
            {
                "manifold": {"kind": "torus1", "resolution": None},
                "model": {"name": "burgers", "parameters": {"nu": 0.1}},
                "initial": {"type": "function_preset", "data": {"name": "sine", "amplitude": 0.5}},
                "solver": {"n": 8, "scheme": "auto", "output_stride": 1000},
                "convergence": {"reference_n": 128},
            },
        )
    )
    rows = convergence_table(config, [8, 16, 32], [1e-3], threads=3)
    errors = [row.L2_err for row in rows]
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 1e-4
    assert all(row.tail_bound >= 0.0 for row in rows)


@pytest.mark.integration
def test_ito_isometry_at_scale():
    report = ito_isometry_check(T=1.0, dt=1e-2, M=10_000, seed=17)
    assert abs(report.value - 1.0) <= 4.0 * math.sqrt(2.0 / 10_000)
    assert report.threshold == pytest.approx(1.0)


@pytest.mark.integration
@pytest.mark.slow
def test_ou_moment_oracle(ou_workspace):
    u0 = unit_state(ou_workspace)
    config = EnsembleConfig(M=10_000, T=1.0, dt=1e-3, seed=99, lags=(1, 10, 100), batch_size=1000)
    stats = run_ensemble(ou_workspace, u0, config, threads=4)
    report = ou_moment_check(stats, ou_workspace, u0, mode=1)
    assert report.passed, report.details
    holder = holder_half_check(stats)
    assert holder.passed
    assert holder.details["stable"]

    dts = [1e-2, 1e-3]
    errors = [strong_error_vs_ou(ou_workspace, u0, T=1.0, dt=dt, M=1000, seed=99) for dt in dts]
    assert strong_order_check(errors, dts).passed


@pytest.mark.integration
def test_cli_pipeline_on_sphere(write_config, tmp_path):
    """verify -> solve -> convergence on the sphere, then a byte-identical rerun."""
    path = write_config(
        manifold={"kind": "sphere2", "resolution": 16},
        solver={"n": 9, "scheme": "imex", "output_stride": 250},
        convergence={"n_list": [4, 9], "dt_list": [1e-3]},
    )
    assert cli.main(["verify", "--config", str(path), "--out", str(tmp_path / "verify")]) == 0
    assert json.loads((tmp_path / "verify" / "run.json").read_text())["passed"] is True

    assert cli.main(["solve", "--config", str(path), "--out", str(tmp_path / "solve")]) == 0
    _, monitors = read_csv(tmp_path / "solve" / "monitors.csv")
    assert monitors.shape[0] == 5
    assert monitors[-1, 1] == pytest.approx(math.exp(-2.0), abs=1.5e-7)

    assert cli.main(["convergence", "--config", str(path), "--out", str(tmp_path / "conv")]) == 0
    _, errors = read_csv(tmp_path / "conv" / "errors.csv")
    assert np.all(errors[:, 2] <= 1.5e-7)

    assert cli.main(["solve", "--config", str(path), "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "solve" / "monitors.csv").read_bytes() == (tmp_path / "again" / "monitors.csv").read_bytes()


@pytest.mark.integration
def test_cli_ensemble_threads(write_config, tmp_path):
    path = write_config(
        stochastic={"enabled": True, "M": 200, "seed": 42, "lags": [1, 10], "batch_size": 25},
        solver={"dt": 0.01, "T": 0.5, "output_stride": 10},
    )
    outputs = []
    for threads in ("1", "8", "8"):
        out = tmp_path / f"threads_{threads}_{len(outputs)}"
        assert cli.main(["solve-sde", "--config", str(path), "--out", str(out), "--threads", threads]) == 0
        outputs.append(out)
    reference = (outputs[0] / "ensemble.csv").read_bytes()
    for out in outputs[1:]:
        assert (out / "ensemble.csv").read_bytes() == reference
        assert (out / "holder.csv").read_bytes() == (outputs[0] / "holder.csv").read_bytes()
