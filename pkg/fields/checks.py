"""
Structural checks on coefficient models and the calculus identity suite.

Checks never raise on failure; they return a CheckReport that callers
aggregate (the verify command turns required failures into exit code 1).
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import structlog

from fields.models import CoefficientModel
from fields.operators import div_div, div_tensor, div_vector, gradient, hessian, laplacian
from fields.samples import random_scalar, random_tensor_pair, random_vector
from fields.tensors import OneForm, TensorField
from geometry.basis import EigenBasis
from geometry.manifolds import integrate

log = structlog.get_logger(__name__)

COMPAT_TOLERANCE = 1e-8
IDENTITY_TOLERANCE = 1e-8


@dataclass
class CheckReport:
    name: str
    passed: bool
    value: float
    threshold: Optional[float]
    details: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "value": float(self.value),
            "threshold": None if self.threshold is None else float(self.threshold),
            "details": self.details,
        }


def _samples(model: CoefficientModel, lam_samples) -> np.ndarray:
    if lam_samples is None:
        return model.lambda_samples()
    lam = np.atleast_1d(np.asarray(lam_samples, dtype=float))
    if lam.size == 0:
        raise ValueError("lambda samples must be nonempty")
    return lam


def _on_nodes(model: CoefficientModel, lam: np.ndarray) -> np.ndarray:
    return np.repeat(lam[:, None], model.grid.n_nodes, axis=1)


def diffusivity_spectrum(model: CoefficientModel, lam_samples: Optional[Sequence[float]] = None):
    """Eigenvalues of sym(g A') relative to g, shape (lam, node, d), plus the asymmetry of g A'."""
    grid = model.grid
    lam = _samples(model, lam_samples)
    dA = model.diffusion_dlam(_on_nodes(model, lam))
    form = np.einsum("nac,lncb->lnab", grid.metric, dA)
    asym = float(np.abs(form - np.swapaxes(form, -1, -2)).max())
    sym = 0.5 * (form + np.swapaxes(form, -1, -2))
    chol_inv = np.linalg.inv(np.linalg.cholesky(grid.metric))
    relative = np.einsum("nai,lnij,nbj->lnab", chol_inv, sym, chol_inv)
    return np.linalg.eigvalsh(relative), asym


def check_parabolicity(model: CoefficientModel, lam_samples: Optional[Sequence[float]] = None) -> CheckReport:
    """Smallest eigenvalue of sym(g A') relative to g, over nodes x lam samples."""
    lam = _samples(model, lam_samples)
    eigenvalues, asym = diffusivity_spectrum(model, lam)
    eig_min = float(eigenvalues[..., 0].min())
    c = model.parabolicity_c
    passed = c > 0 and eig_min >= c - 1e-12 and asym <= 1e-12
    return CheckReport(
        "parabolicity",
        passed,
        eig_min,
        c,
        {"min_eigenvalue": eig_min, "c": c, "symmetry_residual": asym, "lambda_samples": lam.size},
    )


def check_growth(model: CoefficientModel, lam_samples: Optional[Sequence[float]] = None) -> CheckReport:
    """Tightest C with |f| + |A| + |lam A'| + |Div A| <= C (1 + |lam|) on the samples."""
    lam = _samples(model, lam_samples)
    ratios = model.growth_norms(lam) / (1.0 + np.abs(lam))
    empirical = float(ratios.max())
    declared = model.growth_C
    passed = declared is not None and np.isfinite(empirical) and empirical <= declared * (1.0 + 1e-12)
    worst = float(lam[int(np.argmax(ratios))])
    return CheckReport(
        "growth", passed, empirical, declared, {"empirical_C": empirical, "declared_C": declared, "worst_lambda": worst}
    )


def check_geometry_compat(
    model: CoefficientModel, lam_samples: Optional[Sequence[float]] = None, tol: float = COMPAT_TOLERANCE
) -> CheckReport:
    """max over lam of || Div f(., lam) - DivDiv A(., lam) ||_L2 with lam frozen."""
    grid = model.grid
    lam = _samples(model, lam_samples)
    on_nodes = _on_nodes(model, lam)
    defect = model.div_flux_frozen(on_nodes) - model.divdiv_frozen(on_nodes)
    residuals = np.sqrt(integrate(grid, defect**2))
    worst = float(np.max(residuals))
    return CheckReport(
        "geometry_compat",
        worst <= tol,
        worst,
        tol,
        {"max_residual": worst, "worst_lambda": float(lam[int(np.argmax(residuals))])},
    )


def identity_suite(basis: EigenBasis, seed: int = 0, trials: int = 5, tol: float = IDENTITY_TOLERANCE) -> List[CheckReport]:
    """
    Integration by parts, trace identity, Laplace reduction, transpose symmetry and
    Stokes vanishing on random smooth fields; each value is the worst residual over trials.
    """
    grid = basis.grid
    rng = np.random.default_rng(seed)
    worst = {"integration_by_parts": 0.0, "trace_identity": 0.0, "laplace_reduction": 0.0, "transpose_symmetry": 0.0, "stokes": 0.0}

    for _ in range(trials):
        f = random_scalar(basis, rng)
        A, A_t = random_tensor_pair(basis, rng)
        dd = div_div(grid, A)

        lhs = integrate(grid, f.values * dd)
        div_A = div_tensor(grid, A).comps
        ibp = abs(lhs + integrate(grid, np.einsum("ni,ni->n", div_A, gradient(grid, f))))
        trace = abs(lhs - integrate(grid, A.trace_against(hessian(grid, f))))

        u = random_scalar(basis, rng)
        reduction = np.abs(div_div(grid, TensorField.identity(grid).scaled(u)) - laplacian(grid, u)).max()
        transpose = np.abs(dd - div_div(grid, A_t)).max()
        stokes = abs(integrate(grid, div_vector(grid, random_vector(basis, rng))))

        worst["integration_by_parts"] = max(worst["integration_by_parts"], ibp)
        worst["trace_identity"] = max(worst["trace_identity"], trace)
        worst["laplace_reduction"] = max(worst["laplace_reduction"], float(reduction))
        worst["transpose_symmetry"] = max(worst["transpose_symmetry"], float(transpose))
        worst["stokes"] = max(worst["stokes"], stokes)

    # Div grad e_k integrates to zero for every basis mode
    for k in range(basis.n):
        grad_k = OneForm(basis.partials[k], basis.second_partials[k]).sharp(grid)
        worst["stokes"] = max(worst["stokes"], abs(integrate(grid, div_vector(grid, grad_k))))

    reports = [CheckReport(name, value <= tol, value, tol, {"trials": trials}) for name, value in worst.items()]
    log.debug("identity_suite.done", manifold=grid.spec.label, **{k: float(v) for k, v in worst.items()})
    return reports
