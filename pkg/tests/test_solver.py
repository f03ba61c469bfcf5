import numpy as np
import pytest

from nldp.errors import ConfigError
from nldp.grid import GridFunction, constant_exterior, growth_exterior, sample
from nldp.operator import QuadratureSpec, apply_grid
from nldp.params import (constant_coefficient, constant_source,
                         gaussian_source, halfspace_coefficient, model_params)
from nldp.solver import SolveConfig, residual, solve

Q = QuadratureSpec()


def linear_problem(f=1.0):
    return model_params(n=1, s=0.6, t=0.5, p=2.0, q=2.0,
                        coefficient=constant_coefficient(1, 0.0),
                        f=constant_source(f))


def dense_solve(P, cfg):
    """Independent direct-solve oracle: assemble the exact linear operator
    column by column and solve the interior block densely."""
    N = cfg.N
    base = GridFunction(n=1, R=cfg.R, values=np.zeros(N),
                        exterior=cfg.exterior)
    b0 = apply_grid(base, P, cfg.quadrature)
    A = np.empty((N, N))
    for j in range(N):
        e = np.zeros(N)
        e[j] = 1.0
        A[:, j] = apply_grid(base.with_values(e), P, cfg.quadrature) - b0
    xs = np.linspace(-cfg.R, cfg.R, N)
    fv = np.asarray(P.f(xs), dtype=float)
    interior = slice(1, N - 1)
    vals = np.asarray(cfg.exterior(xs, 1), dtype=float)
    rhs = fv - b0 - A[:, [0, N - 1]] @ (vals[[0, N - 1]] - 0.0)
    out = vals.copy()
    out[interior] = np.linalg.solve(A[interior, interior], rhs[interior])
    return out


class TestSolve:
    def test_constant_data_immediate(self):
        P = model_params(n=1, s=0.6, t=0.5, p=2.0, q=2.2,
                         f=constant_source(0.0))
        cfg = SolveConfig(R=2.0, N=129, exterior=constant_exterior(1.5),
                          residual_tol=1e-7)
        u, rep = solve(P, cfg)
        assert rep.converged and rep.iterations == 0
        assert np.max(np.abs(u.values - 1.5)) == 0.0

    def test_linear_matches_dense_oracle(self):
        P = linear_problem()
        cfg = SolveConfig(R=2.0, N=129, exterior=constant_exterior(0.0),
                          residual_tol=1e-9, max_iters=500)
        u, rep = solve(P, cfg)
        assert rep.converged
        oracle = dense_solve(P, cfg)
        assert np.max(np.abs(u.values - oracle)) < 1e-6

    def test_double_phase_converges_and_residual_contract(self, desk_params):
        from dataclasses import replace
        P = replace(desk_params, f=constant_source(1.0))
        cfg = SolveConfig(R=2.0, N=129, exterior=constant_exterior(0.0),
                          residual_tol=1e-8, max_iters=500)
        u, rep = solve(P, cfg)
        assert rep.converged
        assert residual(u, P, Q) <= cfg.residual_tol * 1.01

    def test_invalid_exponents_rejected(self):
        P = model_params(n=1, s=0.5, t=0.5, p=2.0, q=3.0,
                         f=constant_source(1.0))
        with pytest.raises(ConfigError):
            solve(P, SolveConfig(N=65))

    def test_singular_p_via_homotopy(self):
        P = model_params(n=1, s=0.45, t=0.4, p=1.9, q=2.1,
                         coefficient=halfspace_coefficient(1, 1.0),
                         f=constant_source(0.5))
        cfg = SolveConfig(R=2.0, N=65, exterior=constant_exterior(0.0),
                          residual_tol=1e-6, max_iters=20_000,
                          continuation=((2.0, 2.1),))
        u, rep = solve(P, cfg)
        assert rep.converged
        assert rep.final_residual <= 1e-6

    def test_2d_small_solve(self):
        P = model_params(n=2, s=0.6, t=0.5, p=2.0, q=2.2,
                         f=constant_source(0.5))
        cfg = SolveConfig(R=1.0, N=13, exterior=constant_exterior(0.0),
                          residual_tol=3e-4, max_iters=4000)
        u, rep = solve(P, cfg)
        assert rep.converged
        assert u.values[6, 6] > 0.0


class TestResidual:
    def test_zero_for_exact_constant(self):
        P = model_params(n=1, s=0.6, t=0.5, p=2.0, q=2.2,
                         f=constant_source(0.0))
        u = sample(lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                   1, 2.0, 129, exterior=constant_exterior(0.0))
        assert residual(u, P, Q) <= 1e-10

    def test_single_node_perturbation_increases_residual(self):
        P = linear_problem()
        cfg = SolveConfig(R=2.0, N=129, exterior=constant_exterior(0.0),
                          residual_tol=1e-9, max_iters=500)
        u, rep = solve(P, cfg)
        base = residual(u, P, Q)
        bumped = u.values.copy()
        bumped[64] += 0.1
        assert residual(u.with_values(bumped), P, Q) > base + 1e-3


class TestComparisonAndBounds:
    def test_comparison_principle_correct_direction(self):
        # f1 <= f2 with the same exterior: the larger source lifts the
        # solution (operator monotonicity makes the discrete map an
        # M-matrix-like contraction).  Note the stated invariant in the
        # build contract carries the opposite sign; see the acceptance
        # module and the decisions ledger.
        P1 = model_params(n=1, s=0.6, t=0.5, p=2.0, q=2.2,
                          coefficient=halfspace_coefficient(1, 1.0),
                          f=constant_source(0.2))
        P2 = model_params(n=1, s=0.6, t=0.5, p=2.0, q=2.2,
                          coefficient=halfspace_coefficient(1, 1.0),
                          f=constant_source(1.0))
        cfg = SolveConfig(R=2.0, N=97, exterior=constant_exterior(0.0),
                          residual_tol=1e-8, max_iters=500)
        u1, r1 = solve(P1, cfg)
        u2, r2 = solve(P2, cfg)
        assert r1.converged and r2.converged
        tol = 10 * (r1.final_residual + r2.final_residual)
        assert np.all(u2.values >= u1.values - tol)

    def test_exterior_monotonicity(self):
        P = model_params(n=1, s=0.6, t=0.5, p=2.0, q=2.2,
                         coefficient=halfspace_coefficient(1, 1.0),
                         f=constant_source(0.5))
        cfg_lo = SolveConfig(R=2.0, N=97, exterior=constant_exterior(0.0),
                             residual_tol=1e-8, max_iters=500)
        cfg_hi = SolveConfig(R=2.0, N=97, exterior=constant_exterior(0.3),
                             residual_tol=1e-8, max_iters=500)
        u_lo, r_lo = solve(P, cfg_lo)
        u_hi, r_hi = solve(P, cfg_hi)
        assert r_lo.converged and r_hi.converged
        tol = 10 * (r_lo.final_residual + r_hi.final_residual)
        assert np.all(u_hi.values >= u_lo.values - tol)

    def test_boundedness_estimate(self):
        P = model_params(n=1, s=0.6, t=0.5, p=2.0, q=2.2,
                         coefficient=halfspace_coefficient(1, 1.0),
                         f=gaussian_source(1.0))
        cfg = SolveConfig(R=2.0, N=129, exterior=constant_exterior(0.1),
                          residual_tol=1e-8, max_iters=500)
        u, rep = solve(P, cfg)
        assert rep.converged
        # inf exterior and a source-scaled band must sandwich the solution
        C = 4.0  # measured stability prefactor of the desk instance
        f_scale = P.f.sup ** (1.0 / (P.exponents.p - 1.0))
        assert np.all(u.values >= min(0.1, -C * f_scale) - 1e-8)
        assert np.all(u.values <= max(0.1, C * f_scale) + 1e-8)
