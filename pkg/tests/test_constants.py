import math
import warnings

import numpy as np
import pytest

from oracles import sigma_oracle

from nldp.constants import (applicable_regimes, choose_eta_kappa,
                            gamma_exponent, lambda_rescale, sigma,
                            sigma_bounds, theta, _bundle_terms, _term_III,
                            probe_points)
from nldp.errors import DegenerateScaling, DivergentSigma
from nldp.params import barrier_eval, model_params


class TestSigma:
    def test_monotone_in_eta(self, desk_params):
        s1 = sigma(1e-4, desk_params)
        s2 = sigma(1e-3, desk_params)
        s3 = sigma(1e-2, desk_params)
        assert 0 < s1 < s2 < s3

    def test_oracle_match_desk(self, desk_params):
        val = sigma(0.01, desk_params)
        oracle = sigma_oracle(0.01, 0.6, 0.5, 2.0, 2.2)
        assert val == pytest.approx(oracle, rel=1e-10)
        assert val == pytest.approx(0.45244400335, rel=1e-9)

    def test_divergent_eta_rejected(self, desk_params):
        thresh = desk_params.exponents.eta_threshold()
        with pytest.raises(DivergentSigma):
            sigma(thresh, desk_params)
        with pytest.raises(DivergentSigma):
            sigma(thresh * 1.5, desk_params)

    def test_band_soft_check_desk(self, desk_params):
        for eta in (1e-3, 1e-2, 5e-2):
            lo, hi = sigma_bounds(eta, desk_params)
            val = sigma(eta, desk_params)
            assert lo <= val <= hi

    def test_strictly_increasing_on_grid(self, desk_params):
        thresh = desk_params.exponents.eta_threshold()
        etas = np.linspace(0.02, 0.9, 20) * thresh
        vals = np.array([sigma(e, desk_params) for e in etas])
        assert np.all(np.diff(vals) > 0)
        # continuity proxy: no jumps beyond the local secant scale
        secants = np.diff(vals) / np.diff(etas)
        assert np.max(secants) <= 10.0 * np.median(secants)


class TestSigmaBounds:
    def test_zero_eta_lower_bound_vanishes(self, desk_params):
        lo, hi = sigma_bounds(0.0, desk_params)
        assert lo == 0.0

    def test_desk_closed_form(self, desk_params):
        lo, _ = sigma_bounds(0.01, desk_params)
        expect = 2.0 * 2.0 ** (2.2 - 1.0 + 2.0 * 1.2) * (2.0 ** 0.01 - 1.0) / 1.2
        assert lo == pytest.approx(expect, rel=1e-15)

    def test_hi_dominates_lo_random(self):
        rng = np.random.default_rng(11)
        count = 0
        while count < 100:
            s = rng.uniform(0.3, 0.8)
            t = rng.uniform(0.2, s)
            p = rng.uniform(2.0, 2.5)
            q = p * rng.uniform(1.0, min(s / t, 1 + s))
            P = model_params(n=1, s=s, t=t, p=p, q=q)
            if P.validation_report():
                continue
            eta = rng.uniform(0.0, 0.5) * P.exponents.eta_threshold()
            lo, hi = sigma_bounds(eta, P)
            assert hi >= lo
            count += 1


class TestTheta:
    def test_example_value(self):
        assert theta(0.1) == 0.037109375

    def test_limit_to_zero(self):
        assert theta(1e-300) == pytest.approx(0.0, abs=1e-290)

    def test_barrier_consistency_bit_for_bit(self):
        rng = np.random.default_rng(12)
        gap = float(barrier_eval(0.5) - barrier_eval(0.75))
        for kappa in rng.uniform(1e-6, 0.5, 100):
            assert theta(kappa) == kappa * gap

    def test_linear_in_kappa(self):
        rng = np.random.default_rng(14)
        k = rng.uniform(1e-6, 0.25, 50)
        assert np.allclose([theta(2.0 * v) for v in k],
                           [2.0 * theta(v) for v in k], rtol=1e-15)

    def test_domain(self):
        with pytest.raises(ValueError):
            theta(0.6)
        with pytest.raises(ValueError):
            theta(0.0)


class TestGamma:
    def test_example_value(self):
        g = gamma_exponent(0.037109375, 0.5)
        assert g == pytest.approx(0.027020213933709, rel=1e-12)

    def test_tiny_eta_branch(self):
        assert gamma_exponent(0.2, 1e-6) == 1e-6

    def test_both_inequalities_hold(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            th = rng.uniform(1e-6, 0.9)
            eta = rng.uniform(1e-6, 1.5)
            g = gamma_exponent(th, eta)
            assert 0.0 < g < 1.0
            assert (2.0 - th) / 2.0 <= 2.0 ** -g + 1e-15
            assert g <= eta

    def test_monotone_in_theta_and_eta(self):
        assert gamma_exponent(0.2, 0.5) >= gamma_exponent(0.1, 0.5)
        assert gamma_exponent(0.2, 0.5) >= gamma_exponent(0.2, 0.05)


class TestLambda:
    def test_pure_solution_scale(self):
        assert lambda_rescale(1.0, 0.0, 0.37, 2.0) == 0.5

    def test_pure_source_scale(self):
        assert lambda_rescale(0.0, 0.37, 0.37, 2.0) == 0.5

    def test_mixed(self):
        # (f/sigma)^(1/(p-1)) = 4 at p = 2 and sqrt(4) = 2 at p = 3
        s = 0.1
        assert lambda_rescale(1.0, 4.0 * s, s, 2.0) == pytest.approx(0.1)
        assert lambda_rescale(1.0, 4.0 * s, s, 3.0) == pytest.approx(1.0 / 6.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateScaling):
            lambda_rescale(0.0, 0.0, 0.3, 2.0)


class TestSelection:
    def test_regime_routing(self):
        assert applicable_regimes(model_params(n=1, s=0.6, t=0.5, p=2.0, q=2.2)) == [1]
        P2 = model_params(n=1, s=0.45, t=0.40, p=1.9, q=2.1)
        assert P2.validation_report() == []
        assert applicable_regimes(P2) == [2]
        P3 = model_params(n=1, s=0.42, t=0.39, p=1.8, q=1.9)
        assert P3.validation_report() == []
        assert applicable_regimes(P3) == [3]

    def test_tail_term_monotone_in_eta(self, desk_params):
        vals = [_term_III(0.0, desk_params, eta, 1, 1e-9)
                for eta in (0.02, 0.01, 0.005)]
        assert vals[0] > vals[1] > vals[2] > 0

    def test_desk_selection_certificate(self, desk_bundle):
        cert = desk_bundle.certificate
        assert cert is not None
        assert cert.worst_total <= cert.target
        assert 0 < desk_bundle.kappa <= 0.5
        assert 0 < desk_bundle.eta < 0.5
        # competition cap of the kappa-terms
        assert desk_bundle.kappa <= cert.kappa_cap

    def test_fresh_probe_reverification(self, desk_params, desk_bundle):
        cert = desk_bundle.certificate
        rng = np.random.default_rng(99)
        cache = {}
        worst = 0.0
        for x in rng.uniform(-0.75, 0.75, 16):
            terms = _bundle_terms(float(x), desk_params, desk_bundle.kappa,
                                  desk_bundle.eta, 1, 1e-9, cache)
            worst = max(worst, terms["total"])
        assert worst <= cert.target * 1.001 + 1e-12

    def test_homogeneous_mode_selection(self):
        # s/t >= q/p > 1+s: valid only in homogeneous mode; selection still
        # succeeds (experimental relaxation)
        P = model_params(n=1, s=0.3, t=0.2, p=2.0, q=2.8)
        assert P.validation_report()  # rejected by the inhomogeneous rules
        eta, kappa, cert = choose_eta_kappa(1.0, P, tol=1e-8, probes=8,
                                            homogeneous=True)
        assert eta > 0 and kappa > 0


class TestBundle:
    def test_relations(self, desk_bundle):
        b = desk_bundle
        assert b.theta == 95.0 * b.kappa / 256.0
        assert (2.0 - b.theta) / 2.0 <= 2.0 ** (-b.gamma) + 1e-15
        assert b.gamma <= b.eta
        assert b.sigma_lo <= b.sigma <= b.sigma_hi
        assert b.omega_n == 2.0
