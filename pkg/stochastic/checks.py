"""
Statistical verifications for stochastic runs.

Every check returns a CheckReport; "within k standard errors" always uses the
empirical standard error of the Monte Carlo estimate.
"""

import math
from typing import Callable, Optional, Sequence, Union

import numpy as np

from fields.checks import CheckReport
from galerkin.assembly import AssemblyWorkspace
from spectral.ops import SpectralVector
from stochastic.em import PathConfig, integrate_batch, require_stochastic
from stochastic.ensemble import EnsembleStats, stderr_of_norm
from stochastic.rng import standard_normals

STDERR_FACTOR = 4.0
HOLDER_FACTOR = 2.0

Integrand = Union[Callable[[np.ndarray], np.ndarray], Sequence[float], float]


def _within(estimate: float, expected: float, stderr: float, factor: float = STDERR_FACTOR) -> bool:
    return bool(np.isfinite(estimate)) and abs(estimate - expected) <= factor * stderr


def _step_values(integrand: Integrand, t_left: np.ndarray) -> np.ndarray:
    if callable(integrand):
        values = np.broadcast_to(np.asarray(integrand(t_left), dtype=float), t_left.shape)
    else:
        values = np.broadcast_to(np.asarray(integrand, dtype=float), t_left.shape)
    return np.array(values)


def ito_isometry_check(
    T: float,
    dt: float,
    M: int,
    seed: int = 0,
    integrand: Integrand = 1.0,
    batch_size: int = 1000,
) -> CheckReport:
    """E[(sum f_i dW_i)^2] against sum f_i^2 dt for a deterministic step function f."""
    n_steps = int(round(T / dt))
    t_left = dt * np.arange(n_steps)
    f = _step_values(integrand, t_left)
    expected = float(np.sum(f**2) * dt)

    squares = np.empty(M)
    for start in range(0, M, batch_size):
        indices = range(start, min(start + batch_size, M))
        dW = math.sqrt(dt) * standard_normals(seed, indices, n_steps)
        squares[start : start + len(indices)] = (dW @ f) ** 2
    estimate = float(squares.mean())
    stderr = float(squares.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    return CheckReport(
        "ito_isometry",
        _within(estimate, expected, stderr),
        estimate,
        expected,
        {
            "stderr": stderr,
            "stderr_gaussian": expected * math.sqrt(2.0 / M),
            "M": M,
            "dt": dt,
            "T": T,
        },
    )


def holder_half_check(stats: EnsembleStats, factor: float = HOLDER_FACTOR) -> CheckReport:
    """
    Mean-square increments per unit lag stay bounded as the lag shrinks: the
    smallest-lag quotient is finite and at most `factor` times the largest-lag one.

    The pass rule is one-sided. It fails only when short-lag quotients grow,
    i.e. paths rougher than exponent 1/2; quotients that fall as the lag
    shrinks (smoother paths, zero noise) still pass. It is not a two-sided
    estimate of the exponent. `stable` additionally reports max/min <= factor
    across all lags, and `loglog_slope` the fitted slope of log q against log lag.
    """
    q = np.asarray(stats.holder.mean, dtype=float)
    if q.size == 0:
        return CheckReport("holder_half", False, math.nan, factor, {"reason": "no admissible lags"})
    finite = bool(np.all(np.isfinite(q)))
    bounded = finite and bool(q[0] <= factor * q[-1] + 1e-300)
    positive = q > 0
    if np.all(positive):
        spread = float(q.max() / q.min())
        slope = float(np.polyfit(np.log(np.asarray(stats.lags, dtype=float)), np.log(q), 1)[0]) if q.size > 1 else 0.0
    else:
        spread = 1.0 if np.all(q == 0) else math.inf
        slope = math.nan
    return CheckReport(
        "holder_half",
        bounded,
        float(q.max()),
        factor,
        {
            "lags": list(stats.lags),
            "quotients": q.tolist(),
            "stderr": np.asarray(stats.holder.stderr).tolist(),
            "spread": spread,
            "stable": finite and spread <= factor,
            "loglog_slope": slope,
        },
    )


def ou_second_moment(rate: float, sigma: float, a0: float, t: float) -> float:
    """E[a(t)^2] for da = -rate a dt + sigma dW, a(0) = a0."""
    decay = math.exp(-2.0 * rate * t)
    return decay * a0**2 + sigma**2 * (1.0 - decay) / (2.0 * rate)


def _ou_coefficients(ws: AssemblyWorkspace, u0: SpectralVector, mode: int):
    require_stochastic(ws)
    rate = -float(ws.linear_operator()[mode, mode]) - ws.eps * float(ws.mu[mode])
    sigma = float(ws.noise_pairing(u0.coeffs)[mode])
    return rate, sigma


def ou_moment_check(stats: EnsembleStats, ws: AssemblyWorkspace, u0: SpectralVector, mode: int = 1) -> CheckReport:
    """E[alpha_mode(T)^2] within 4 standard errors of the closed-form OU second moment."""
    rate, sigma = _ou_coefficients(ws, u0, mode)
    T = float(stats.times[-1])
    expected = ou_second_moment(rate, sigma, float(u0.coeffs[mode]), T)
    estimate, stderr = stats.second_moment(mode)
    return CheckReport(
        "ou_second_moment",
        _within(estimate, expected, stderr),
        estimate,
        expected,
        {"stderr": stderr, "rate": rate, "sigma": sigma, "mode": mode, "M": stats.M},
    )


def strong_error_vs_ou(
    ws: AssemblyWorkspace,
    u0: SpectralVector,
    T: float,
    dt: float,
    M: int,
    seed: int = 0,
    mode: int = 1,
    refine: int = 10,
) -> float:
    """
    Root-mean-square error at T of Galerkin EM with step dt against an OU
    reference integrated exactly in the drift on the dt/refine grid of the same
    Brownian paths (increments summed in blocks for the coarse run).
    """
    rate, sigma = _ou_coefficients(ws, u0, mode)
    config = PathConfig(T=T, dt=dt, seed=seed, output_stride=int(round(T / dt)))
    h = dt / refine
    fine = math.sqrt(h) * standard_normals(seed, range(M), config.n_steps * refine)
    coarse = fine.reshape(M, config.n_steps, refine).sum(axis=2)

    result = integrate_batch(ws, u0, config, range(M), increments=coarse)
    decay = math.exp(-rate * h)
    reference = np.full(M, float(u0.coeffs[mode]))
    for k in range(fine.shape[1]):
        reference = decay * (reference + sigma * fine[:, k])
    error = result.alphas[:, -1, mode] - reference
    return float(np.sqrt(np.mean(error**2)))


def strong_order_check(errors: Sequence[float], dts: Sequence[float], factor: float = HOLDER_FACTOR) -> CheckReport:
    """Errors shrink at least like dt^(1/2), up to `factor`, between consecutive step sizes."""
    errors = np.asarray(errors, dtype=float)
    dts = np.asarray(dts, dtype=float)
    ratios = errors[1:] / (errors[:-1] * np.sqrt(dts[1:] / dts[:-1]))
    order = np.log(errors[:-1] / errors[1:]) / np.log(dts[:-1] / dts[1:])
    return CheckReport(
        "em_strong_order",
        bool(np.all(np.isfinite(ratios)) and np.all(ratios <= factor)),
        float(ratios.max()),
        factor,
        {"dts": dts.tolist(), "errors": errors.tolist(), "observed_order": order.tolist()},
    )


def ito_term_check(stats: EnsembleStats) -> CheckReport:
    """Sample means of sum (alpha . b) dW and of the Ito-corrected energy residual are within 4 stderr of 0."""
    ito_mean, ito_err = float(stats.ito_integral.mean), float(stats.ito_integral.stderr)
    res_mean, res_err = float(stats.ito_residual.mean), float(stats.ito_residual.stderr)
    passed = _within(ito_mean, 0.0, ito_err) and _within(res_mean, 0.0, res_err)
    return CheckReport(
        "ito_terms",
        passed,
        max(abs(ito_mean), abs(res_mean)),
        0.0,
        {"ito_integral": ito_mean, "ito_stderr": ito_err, "energy_residual": res_mean, "energy_stderr": res_err},
    )


def mean_consistency_check(stats: EnsembleStats, deterministic_alpha: np.ndarray) -> CheckReport:
    """|| E u(T) - u_det(T) ||_L2 <= 4 stderr of the mean field."""
    gap = float(np.linalg.norm(stats.mean_field() - np.asarray(deterministic_alpha, dtype=float)))
    stderr = stderr_of_norm(stats.alpha)
    return CheckReport("mean_consistency", gap <= STDERR_FACTOR * stderr, gap, STDERR_FACTOR * stderr, {"stderr": stderr})


def _noise_growth(ws: AssemblyWorkspace) -> float:
    """Smallest C_Phi with |Phi(x, lam)| <= C_Phi (1 + |lam|) on the model's lam samples."""
    model = ws.model
    lam = model.lambda_samples(17)
    on_nodes = np.repeat(lam[:, None], ws.grid.n_nodes, axis=1)
    sup = np.abs(model.noise(on_nodes)).max(axis=1)
    return float((sup / (1.0 + np.abs(lam))).max())


def stochastic_energy_bound(stats: EnsembleStats, ws: AssemblyWorkspace, u0: SpectralVector) -> CheckReport:
    """
    E||u(T)||^2 + c E int ||grad u||^2 minus 4 standard errors, against
    (||u0||^2 + K T (1 + |M|)) e^(K T) with K = max(1, C) + 2 C_Phi^2.
    """
    model = ws.model
    c = model.parabolicity_c
    C = model.growth_C
    if C is None:
        return CheckReport("stochastic_energy_bound", False, math.nan, None, {"reason": "model declares no growth constant"})
    noise_C = _noise_growth(ws)
    K = max(1.0, C) + 2.0 * noise_C**2
    T = float(stats.times[-1])
    volume = float(ws.grid.weights.sum())
    u0_sq = float(u0.coeffs @ u0.coeffs)
    rhs = (u0_sq + K * T * (1.0 + volume)) * math.exp(K * T)
    lhs = float(stats.l2_sq.mean[-1] + c * stats.grad_integral.mean[-1])
    lhs_err = float(stats.l2_sq.stderr[-1] + c * stats.grad_integral.stderr[-1])
    lower = lhs - STDERR_FACTOR * lhs_err
    return CheckReport(
        "stochastic_energy_bound",
        lower <= rhs,
        lower,
        rhs,
        {"lhs": lhs, "stderr": lhs_err, "K": K, "noise_C": noise_C, "c": c},
    )


def stochastic_checks(
    stats: EnsembleStats,
    ws: AssemblyWorkspace,
    u0: SpectralVector,
    deterministic_alpha: Optional[np.ndarray] = None,
):
    """The checks a solve-sde run records in run.json."""
    reports = [holder_half_check(stats), ito_term_check(stats), stochastic_energy_bound(stats, ws, u0)]
    if deterministic_alpha is not None:
        reports.append(mean_consistency_check(stats, deterministic_alpha))
    return {r.name: r for r in reports}
