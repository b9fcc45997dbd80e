"""
Shared set-up for every command: grid, basis, model, workspace and initial
state built from a validated RunConfig.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import structlog

from commands.schema import InitialConfig, PresetData, RunConfig
from core.errors import ConfigError
from fields.models import CoefficientModel, truncate
from fields.registry import attach_noise, build_model
from galerkin.assembly import AssemblyWorkspace
from geometry.basis import EigenBasis, build_basis, dealiased_resolution
from geometry.manifolds import ManifoldKind, ManifoldSpec, QuadratureGrid, build_grid
from spectral.ops import SpectralVector, project

log = structlog.get_logger(__name__)

COORDINATES = {
    ManifoldKind.TORUS1: ("x",),
    ManifoldKind.TORUS2: ("x", "y"),
    ManifoldKind.SPHERE2: ("theta", "phi"),
}


@dataclass(frozen=True, eq=False)
class Problem:
    spec: ManifoldSpec
    grid: QuadratureGrid
    basis: EigenBasis
    model: CoefficientModel
    ws: AssemblyWorkspace
    u0: SpectralVector

    @property
    def coordinate_names(self):
        return COORDINATES[self.spec.kind]


def preset_samples(grid: QuadratureGrid, preset: PresetData) -> np.ndarray:
    nodes = grid.nodes
    k = preset.wavenumber
    if preset.name == "constant":
        return np.full(grid.n_nodes, preset.value)
    if preset.name == "cosine_bump":
        if grid.spec.kind is ManifoldKind.SPHERE2:
            # cos(k theta) is a polynomial in z = cos(theta), smooth at the poles
            return preset.offset + preset.amplitude * np.cos(k * nodes[:, 0])
        scale = 2.0 * math.pi / grid.spec.periods[0]
        return preset.offset + preset.amplitude * np.cos(k * scale * nodes[:, 0])
    # sine
    if grid.spec.kind is ManifoldKind.SPHERE2:
        return preset.amplitude * np.sin(nodes[:, 0]) ** k * np.sin(k * nodes[:, 1])
    scale = 2.0 * math.pi / grid.spec.periods[0]
    return preset.amplitude * np.sin(k * scale * nodes[:, 0])


def initial_state(basis: EigenBasis, initial: InitialConfig) -> SpectralVector:
    if initial.type == "modes":
        coeffs = np.zeros(basis.n)
        for index, value in initial.data:
            if index >= basis.n:
                raise ConfigError(f"initial mode {index} is outside a basis of {basis.n} modes")
            coeffs[index] += value
        return SpectralVector(coeffs, basis.basis_id)
    return project(basis, preset_samples(basis.grid, initial.data))


def build_coefficients(config: RunConfig, grid: QuadratureGrid) -> CoefficientModel:
    section = config.model
    model = build_model(section.name, grid, section.parameters, section.lambda_range)
    if section.truncate:
        model = truncate(model)
    stochastic = config.stochastic
    if stochastic.enabled:
        params = dict(stochastic.phi_parameters)
        if stochastic.phi_name != "zero":
            params.setdefault("sigma", stochastic.sigma)
        model = attach_noise(model, stochastic.phi_name, params)
    return model


def build_problem(config: RunConfig, n: Optional[int] = None) -> Problem:
    """n overrides solver.n (convergence sweeps); the grid is then dealiased for that n unless pinned."""
    spec = config.manifold.spec()
    n = n or config.solver.n
    resolution = config.manifold.resolution or dealiased_resolution(spec, n)
    grid = build_grid(spec, resolution)
    basis = build_basis(spec, grid, n)
    model = build_coefficients(config, grid)
    ws = AssemblyWorkspace(basis, model, config.solver.eps)
    u0 = initial_state(basis, config.initial)
    log.debug("problem.built", manifold=spec.label, grid=list(grid.shape), n=n, model=model.name)
    return Problem(spec=spec, grid=grid, basis=basis, model=model, ws=ws, u0=u0)
