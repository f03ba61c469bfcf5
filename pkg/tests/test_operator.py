import numpy as np
import pytest

from oracles import (energy_beta_oracle, operator_beta_p2_oracle,
                     truncated_touch_oracle)

from nldp.errors import NonIntegrableNearField, TailDivergence, TouchViolation
from nldp.grid import (GridFunction, callable_exterior, constant_exterior,
                       growth_exterior, sample)
from nldp.operator import (QuadratureSpec, apply_grid, delta, energy,
                           evaluate, evaluate_truncated, pv_eval_oneside)
from nldp.params import (barrier_eval, constant_coefficient,
                         halfspace_coefficient, model_params)

Q = QuadratureSpec()


def beta_grid(N=1025, R=2.0):
    return sample(barrier_eval, 1, R, N, exterior=constant_exterior(0.0))


def pure_p_params(s=0.6, p=2.0):
    return model_params(n=1, s=s, t=0.5, p=p, q=max(p, 2.0),
                        coefficient=constant_coefficient(1, 0.0))


class TestDelta:
    def test_even_function_at_origin(self):
        u = beta_grid()
        for y in (0.1, 0.35, 0.8):
            expect = 1.0 - barrier_eval(y)
            assert delta(u, 0.0, y, 2.0) == pytest.approx(expect, abs=1e-8)

    def test_constant_is_annihilated(self):
        u = sample(lambda x: np.full_like(np.asarray(x, dtype=float), 2.5),
                   1, 2.0, 129, exterior=constant_exterior(2.5))
        for r in (1.5, 2.0, 3.0):
            assert delta(u, 0.3, 0.7, r) == 0.0

    def test_nonnegative_at_global_max(self):
        u = beta_grid()
        rng = np.random.default_rng(0)
        for y in rng.uniform(0.01, 3.0, 50):
            for r in (1.5, 2.0, 2.7):
                assert delta(u, 0.0, y, r) >= -1e-12

    def test_rejects_sublinear_exponent(self):
        u = beta_grid(129)
        with pytest.raises(ValueError):
            delta(u, 0.0, 0.5, 1.0)

    def test_coefficient_weighted_form(self):
        u = beta_grid(257)
        a = halfspace_coefficient(1, 1.0)
        # at x > 0 the indicator is on for both halves
        v = delta(u, 0.3, 0.2, 2.2, coeff=a)
        w = delta(u, 0.3, 0.2, 2.2)
        assert v == pytest.approx(w, rel=1e-12)
        assert delta(u, -0.3, 0.2, 2.2, coeff=a) == 0.0


class TestEvaluate:
    def test_constant_gives_zero(self):
        u = sample(lambda x: np.full_like(np.asarray(x, dtype=float), 3.0),
                   1, 2.0, 257, exterior=constant_exterior(3.0))
        v, err = evaluate(u, 0.4, pure_p_params(), Q)
        assert abs(v) <= max(err, 1e-10)

    def test_barrier_anchor_and_oracle_match(self):
        # frozen analytic anchor at the origin plus the 9-probe oracle sweep
        u = sample(barrier_eval, 1, 2.0, 2049, exterior=constant_exterior(0.0))
        P = pure_p_params()
        v, _ = evaluate(u, 0.0, P, Q)
        assert v == pytest.approx(5.952380952380952, rel=5e-7)
        for x in (0.0, 0.4, -0.6, 0.8):
            val, _ = evaluate(u, x, P, Q)
            oracle = operator_beta_p2_oracle(x, 0.6)
            assert val == pytest.approx(oracle, rel=1e-6)

    def test_odd_function_cancels_at_origin(self):
        u = sample(np.tanh, 1, 2.0, 257,
                   exterior=callable_exterior(np.tanh, sup=1.0))
        v, err = evaluate(u, 0.0, pure_p_params(), Q)
        assert abs(v) <= max(10 * err, 1e-9)

    def test_touching_monotonicity(self):
        # u <= v with equality at the probe: evaluate(u) >= evaluate(v)
        P = model_params(n=1, s=0.6, t=0.5, p=2.0, q=2.2,
                         coefficient=halfspace_coefficient(1, 1.0))
        v_fn = barrier_eval
        u = sample(lambda x: v_fn(x) - np.minimum((np.asarray(x) - 0.25) ** 2, 1.0),
                   1, 2.0, 513, exterior=constant_exterior(-1.0))
        v = sample(v_fn, 1, 2.0, 513, exterior=constant_exterior(0.0))
        lu, eu = evaluate(u, 0.25, P, Q)
        lv, ev = evaluate(v, 0.25, P, Q)
        assert lu >= lv - (eu + ev)

    def test_translation_covariance(self):
        P = pure_p_params()
        u = beta_grid(513)
        z = 0.5
        w = sample(lambda x: barrier_eval(np.asarray(x) - z), 1, 2.0, 513,
                   exterior=callable_exterior(
                       lambda x: barrier_eval(np.asarray(x) - z)))
        v1, e1 = evaluate(u, 0.2, P, Q)
        v2, e2 = evaluate(w, 0.2 + z, P, Q)
        assert v2 == pytest.approx(v1, abs=max(2e-6, 2 * (e1 + e2)))

    def test_symmetrisation_consistency(self):
        # delta form vs one-sided PV with shrinking exclusion balls: the
        # discrepancy is the excluded symmetric mass ~ eps^(2-sp) and must
        # vanish at that rate along eps = 2^-k
        P = pure_p_params()
        u = beta_grid(513)
        ref, eref = evaluate(u, 0.3, P, Q)
        ks = np.array([4, 6, 8, 10, 12])
        errs = np.array([abs(pv_eval_oneside(u, 0.3, P, eps=2.0 ** -k, Q=Q)[0]
                             - ref) for k in ks])
        assert np.all(np.diff(errs) < 0.0)
        rate = np.polyfit(-ks * np.log(2.0), np.log(errs), 1)[0]
        assert rate >= (2.0 - P.exponents.sp) - 0.15
        assert errs[-1] <= 5.0 * 2.0 ** (-12 * (2.0 - P.exponents.sp))

    def test_margin_precondition(self):
        u = beta_grid(257)
        with pytest.raises(ValueError):
            evaluate(u, 1.999, pure_p_params(), Q)

    def test_linear_interp_gate(self):
        # cubic required when p <= 1/(1-s)
        u = sample(barrier_eval, 1, 2.0, 257,
                   exterior=constant_exterior(0.0), interp="linear")
        P = model_params(n=1, s=0.6, t=0.5, p=2.0, q=2.2)  # 1/(1-s) = 2.5 > p
        with pytest.raises(NonIntegrableNearField):
            evaluate(u, 0.0, P, Q)
        # and admissible when p > 1/(1-s)
        P_ok = model_params(n=1, s=0.3, t=0.25, p=2.0, q=2.2)
        v, _ = evaluate(u, 0.0, P_ok, Q)
        assert np.isfinite(v)

    def test_tail_divergence_guard(self):
        P = pure_p_params()  # threshold sp/(p-1) = 1.2
        u = sample(barrier_eval, 1, 2.0, 257, exterior=growth_exterior(1.3))
        with pytest.raises(TailDivergence):
            evaluate(u, 0.0, P, Q)

    def test_growth_envelope_exterior_converges(self):
        P = model_params(n=1, s=0.6, t=0.5, p=2.0, q=2.2,
                         coefficient=halfspace_coefficient(1, 1.0))
        u = sample(barrier_eval, 1, 2.0, 257, exterior=growth_exterior(0.05))
        v, err = evaluate(u, 0.0, P, Q)
        assert np.isfinite(v) and err < 1e-5


class TestNearFieldSlopes:
    """Integrand decay at the barrier peak against the delta-level
    envelopes (log-log slope over dyadic offsets)."""

    def _slope(self, P, u, ks, lo=3, hi=20):
        vals = []
        for k in range(lo, hi + 1):
            y = 2.0 ** -k
            d = delta(u, 0.0, y, P.exponents.p)
            vals.append(abs(d) * ks(y))
        vals = np.array(vals)
        kk = np.arange(lo, hi + 1)
        good = vals > 0
        slope = np.polyfit(-kk[good] * np.log(2.0), np.log(vals[good]), 1)[0]
        return slope

    def test_degenerate_slope(self):
        P = pure_p_params(s=0.6, p=2.0)
        u = sample(barrier_eval, 1, 2.0, 4097, exterior=constant_exterior(0.0))
        e = P.exponents
        slope = self._slope(P, u, lambda y: y ** (-1.0 - e.sp))
        assert slope >= 2.0 * (e.p - 1.0) - 1.0 - e.sp - 0.1

    def test_singular_slope(self):
        P = model_params(n=1, s=0.45, t=0.4, p=1.9, q=2.1,
                         coefficient=constant_coefficient(1, 0.0))
        u = sample(barrier_eval, 1, 2.0, 4097, exterior=constant_exterior(0.0))
        e = P.exponents
        vals = []
        for k in range(3, 21):
            y = 2.0 ** -k
            vals.append(abs(delta(u, 0.0, y, e.p)) * y ** (-1.0 - e.sp))
        kk = np.arange(3, 21)
        slope = np.polyfit(-kk * np.log(2.0), np.log(vals), 1)[0]
        assert slope >= (e.p - 1.0) - 1.0 - e.sp - 0.1

    def test_q_term_slope_with_bounded_coefficient(self):
        P = model_params(n=1, s=0.6, t=0.5, p=2.0, q=2.2,
                         coefficient=halfspace_coefficient(1, 1.0))
        u = sample(barrier_eval, 1, 2.0, 4097, exterior=constant_exterior(0.0))
        e = P.exponents
        vals = []
        for k in range(3, 21):
            y = 2.0 ** -k
            d = delta(u, 0.3, y, e.q, coeff=P.a)
            vals.append(abs(d) * y ** (-1.0 - e.tq))
        kk = np.arange(3, 21)
        slope = np.polyfit(-kk * np.log(2.0), np.log(vals), 1)[0]
        assert slope >= (e.q - 1.0) - 1.0 - e.tq - 0.1


class TestBatchedApply:
    def test_matches_single_point_evaluate(self, desk_params):
        u = sample(barrier_eval, 1, 2.0, 513, exterior=constant_exterior(0.0))
        vals, errs = apply_grid(u, desk_params, Q, with_error=True)
        for i in (80, 256, 400):
            v, e = evaluate(u, u.nodes[i], desk_params, Q)
            assert vals[i] == pytest.approx(v, abs=max(2e-5, 10 * (e + errs[i])))

    def test_2d_apply_matches_evaluate(self):
        P = model_params(n=2, s=0.6, t=0.5, p=2.0, q=2.2)

        def bump(pts):
            pts = np.asarray(pts, dtype=float)
            r2 = np.sum(pts * pts, axis=-1)
            return np.maximum(0.0, 1.0 - r2) ** 2

        u = sample(bump, 2, 2.0, 33, exterior=constant_exterior(0.0))
        vals = apply_grid(u, P, Q)
        v, err = evaluate(u, np.zeros(2), P, Q)
        assert vals[16, 16] == pytest.approx(v, rel=2e-3)


class TestTruncatedEvaluate:
    def test_identity_glue(self):
        P = pure_p_params()
        u = beta_grid(513)
        ref, eref = evaluate(u, 0.1, P, Q)
        val, err = evaluate_truncated(u, lambda z: u(z), 0.1, 0.4, P, Q)
        assert val == pytest.approx(ref, abs=max(1e-6, 2 * (err + eref)))

    def test_touching_paraboloid_bounds_from_above(self):
        # phi = u + (x - x0)^2 touches from above; monotonicity pushes the
        # glued value down
        P = pure_p_params()
        u = beta_grid(513)
        x0 = 0.1

        def phi(z):
            return np.asarray(u(z)) + (np.asarray(z, dtype=float) - x0) ** 2

        val, err = evaluate_truncated(u, phi, x0, 0.3, P, Q)
        ref, eref = evaluate(u, x0, P, Q)
        assert val <= ref + err + eref + 1e-9

    def test_barrier_touched_by_its_own_polynomial(self):
        # phi(x) = 1 + |x|^4 - 2|x|^2 coincides with the barrier inside B_1
        P = pure_p_params()
        u = beta_grid(2049)

        def phi(z):
            z = np.asarray(z, dtype=float)
            return 1.0 + z ** 4 - 2.0 * z ** 2

        val, err = evaluate_truncated(u, phi, 0.0, 0.5, P, Q)
        oracle = truncated_touch_oracle(0.6)
        assert val == pytest.approx(oracle, rel=1e-5)

    def test_touch_violation(self):
        P = pure_p_params()
        u = beta_grid(257)
        with pytest.raises(TouchViolation):
            evaluate_truncated(u, lambda z: np.asarray(u(z)) - 1e-3, 0.1, 0.3,
                               P, Q)
        with pytest.raises(TouchViolation):
            # touches but dips below off-centre
            evaluate_truncated(
                u, lambda z: np.asarray(u(z)) - (np.asarray(z) - 0.1) ** 2,
                0.1, 0.3, P, Q)


class TestEnergy:
    def test_constant_has_zero_energy(self):
        P = pure_p_params()
        u = sample(lambda x: np.full_like(np.asarray(x, dtype=float), 1.0),
                   1, 2.0, 129, exterior=constant_exterior(1.0))
        v, err, rep = energy(u, P, Q)
        assert not rep["diverged"]
        # exact zero up to the declared tail estimate of the glued constant
        assert abs(v) <= max(err, 1e-7)

    def test_barrier_energy_matches_tensor_oracle(self):
        P = pure_p_params()
        u = beta_grid(129)
        v, err, rep = energy(u, P, Q)
        oracle = energy_beta_oracle(0.6, n_outer=516)
        assert not rep["diverged"]
        assert v == pytest.approx(oracle, rel=1e-4)

    def test_jump_flags_divergence(self):
        P = model_params(n=1, s=0.9, t=0.5, p=2.0, q=2.2,
                         coefficient=constant_coefficient(1, 0.0))
        u = sample(lambda x: np.where(np.asarray(x) > 0.0, 1.0, 0.0),
                   1, 2.0, 513, exterior=constant_exterior(0.0))
        v, err, rep = energy(u, P, Q)
        assert rep["diverged"] and v == np.inf
        assert rep["offending_scale"] is not None


class TestGridFunctionIO:
    def test_roundtrip(self, tmp_path):
        u = sample(barrier_eval, 1, 1.5, 65, exterior=growth_exterior(0.1))
        prefix = str(tmp_path / "u")
        u.save(prefix)
        v = GridFunction.load(prefix)
        assert np.array_equal(u.values, v.values)
        assert v.R == u.R and v.exterior.tag == "growth"
        assert float(v(2.5)) == pytest.approx(float(u(2.5)))
