import copy
import json
import math

import numpy as np
import pytest
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker

from db.models import Base
from fields.registry import attach_noise, heat
from galerkin.assembly import AssemblyWorkspace
from geometry.basis import build_basis
from geometry.manifolds import ManifoldSpec, build_grid
from spectral.ops import SpectralVector

# 1) Create an in-memory SQLite engine & session factory
SQLALCHEMY_DATABASE_URL = "sqlite:///:memory:"
engine = create_engine(SQLALCHEMY_DATABASE_URL, connect_args={"check_same_thread": False})
TestingSessionLocal = sessionmaker(bind=engine, autoflush=False, autocommit=False)


@pytest.fixture(scope="session", autouse=True)
def prepare_database():
    # create tables once for the session
    Base.metadata.create_all(bind=engine)
    yield
    Base.metadata.drop_all(bind=engine)


@pytest.fixture()
def db_session():
    # each test gets a clean transaction
    connection = engine.connect()
    transaction = connection.begin()
    session = TestingSessionLocal(bind=connection)
    yield session
    session.close()
    transaction.rollback()
    connection.close()


@pytest.fixture(autouse=True)
def no_run_log(monkeypatch):
    # CLI tests opt back in explicitly
    monkeypatch.setenv("GALERKIN_RUN_LOG", "0")


# geometry


@pytest.fixture(scope="session")
def torus1_grid():
    return build_grid(ManifoldSpec.torus1(), 64)


@pytest.fixture(scope="session")
def torus2_grid():
    return build_grid(ManifoldSpec.torus2(), 32)


@pytest.fixture(scope="session")
def sphere_grid():
    return build_grid(ManifoldSpec.sphere2(), 16)


@pytest.fixture(scope="session", params=["torus1", "torus2", "sphere2"])
def any_grid(request, torus1_grid, torus2_grid, sphere_grid):
    return {"torus1": torus1_grid, "torus2": torus2_grid, "sphere2": sphere_grid}[request.param]


@pytest.fixture(scope="session")
def torus1_basis(torus1_grid):
    return build_basis(torus1_grid.spec, torus1_grid, 9)


@pytest.fixture(scope="session")
def sphere_basis(sphere_grid):
    return build_basis(sphere_grid.spec, sphere_grid, 9)


# workspaces


def heat_workspace(grid, n, eps=0.0, sigma=None):
    basis = build_basis(grid.spec, grid, n)
    model = heat(grid)
    if sigma is not None:
        model = attach_noise(model, "additive_mode", {"sigma": sigma, "mode": 1})
    return AssemblyWorkspace(basis, model, eps)


def unit_state(ws, k=1, amplitude=1.0):
    return SpectralVector.unit(ws.basis, k, amplitude)


@pytest.fixture(scope="session")
def heat_t1(torus1_grid):
    return heat_workspace(torus1_grid, 9)


@pytest.fixture(scope="session")
def ou_workspace():
    """Heat drift with additive noise 0.3 e_1 on T1; mode 1 is an OU process with rate 1."""
    spec = ManifoldSpec.torus1()
    grid = build_grid(spec, 8)
    return heat_workspace(grid, 3, sigma=0.3)


# run configurations


def base_config():
    return {
        "schema_version": 1,
        "manifold": {"kind": "torus1", "resolution": 32},
        "model": {"name": "heat"},
        "initial": {"type": "modes", "data": [[1, 1.0]]},
        "solver": {"n": 8, "dt": 1e-3, "T": 1.0, "scheme": "rk4", "output_stride": 100},
        "checks": {"identity_trials": 2},
    }


def merged(base, overrides):
    out = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merged(out[key], value)
        else:
            out[key] = value
    return out


@pytest.fixture()
def write_config(tmp_path):
    """Write a run configuration (base heat run plus overrides) and return its path."""

    def _write(name="config.json", **overrides):
        path = tmp_path / name
        path.write_text(json.dumps(merged(base_config(), overrides)))
        return path

    return _write


@pytest.fixture()
def out_dir(tmp_path):
    path = tmp_path / "out"
    path.mkdir()
    return path


def analytic_heat_mode(mu, t):
    return math.exp(-mu * t)


def read_csv(path):
    rows = path.read_text().splitlines()
    header = rows[0].split(",")
    data = np.array([[float(v) for v in row.split(",")] for row in rows[1:]])
    return header, data
