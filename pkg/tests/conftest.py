import numpy as np
import pytest

from psgheat.app import create_app
from psgheat.core.fem import P1Space, build_mesh
from psgheat.core.heat_model import HeatModel, analytic_case


@pytest.fixture
def app(tmp_path):
    """Flask app wired to a per-test output directory (pytest-flask picks this up for `client`)"""
    app = create_app('testing', overrides={'OUTPUT_DIR': str(tmp_path / 'runs')})
    return app


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture(scope='session')
def space8():
    return P1Space(build_mesh(8))


@pytest.fixture(scope='session')
def space16():
    return P1Space(build_mesh(16))


@pytest.fixture(scope='session')
def space32():
    return P1Space(build_mesh(32))


@pytest.fixture(scope='session')
def strongly_convex16(space16):
    config, u_bar = analytic_case('strongly_convex', space16.mesh, lam=2.0, a_bar=2.0)
    return HeatModel(config, space16), u_bar


@pytest.fixture(scope='session')
def convex16(space16):
    config, u_bar = analytic_case('convex', space16.mesh, a_bar=2.0)
    return HeatModel(config, space16), u_bar


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_control(rng):
    """Factory for random nodal controls in [low, high]"""
    def make(mesh, low=-1.0, high=1.0):
        return mesh.zeros().with_values(rng.uniform(low, high, mesh.node_count))
    return make
