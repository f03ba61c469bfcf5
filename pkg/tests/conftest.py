import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nldp.grid import constant_exterior
from nldp.params import gaussian_source, halfspace_coefficient, model_params
from nldp.solver import SolveConfig


def desk_problem(f_amp=0.002):
    """The desk-scale model instance: n=1, s=0.6, t=0.5, p=2, q=2.2,
    Gagliardo kernels, indicator coefficient, c_hat=1."""
    return model_params(n=1, s=0.6, t=0.5, p=2.0, q=2.2,
                        coefficient=halfspace_coefficient(1, 1.0),
                        f=gaussian_source(f_amp))


@pytest.fixture(scope="session")
def desk_params():
    return desk_problem()


@pytest.fixture(scope="session")
def desk_bundle(desk_params):
    from nldp.constants import build_bundle
    # u_sup/f_sup for the solved desk instance; the selection itself only
    # depends on the structural data.
    return build_bundle(desk_params, u_sup=0.002, f_sup=desk_params.f.sup)


@pytest.fixture(scope="session")
def pipeline_result(desk_params, desk_bundle):
    from nldp.reglab import run_pipeline
    cfg = SolveConfig(R=2.0, N=1024, exterior=constant_exterior(0.0),
                      residual_tol=1e-8, max_iters=3000)
    return run_pipeline(desk_params, cfg, levels=6, x0=0.0,
                        bundle=desk_bundle)
