"""The explicit constant chain of the regularity machinery.

Pipeline: pick the measure threshold epsilon, select (eta, kappa) so the
barrier-perturbation estimate bundles hold at every probe point, integrate
sigma (the source-smallness threshold), then derive theta = 95 kappa / 256,
the decay exponent gamma, and the normalisation lambda.

The three estimate bundles mirror the degenerate/singular case split of the
underlying proof:

  regime 1:  q >= p >= 2
  regime 2:  q >= 2 >= p > 1/(1-s)
  regime 3:  2 >= q >= p > 1/(1-s)

Each bundle sums five quantities (the barrier terms I_p, I_q inside the
unit ball, the exterior-envelope terms II_p, II_q outside it, and the
radial tail III) and must stay below eps / (Lambda 2^(n+sp+q)) for every
probe x in B_{3/4}; eta is bisected first (it controls II and III), then
kappa (it controls I), per-regime, and the final pair is the minimum over
the applicable regimes so all bundles hold simultaneously.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DegenerateScaling, DivergentSigma, SelectionFailed
from .params import (OMEGA_N, ProblemParams, barrier_eval)
from .quadrature import adaptive_quad, geometric_tail_quad, PanelRule, near_singular_quad

logger = logging.getLogger(__name__)

__all__ = [
    "ConstantsBundle", "SelectionCertificate", "sigma", "sigma_bounds",
    "choose_eta_kappa", "theta", "gamma_exponent", "lambda_rescale",
    "build_bundle", "unit_ball_volume",
]


def unit_ball_volume(n: int) -> float:
    return {1: 2.0, 2: math.pi}[n]


# --------------------------------------------------------------------------
# sigma and its closed-form band.

def sigma(eta: float, P: ProblemParams, tol: float = 1e-12) -> float:
    """The source-smallness threshold: 2^(q-1) times the integral over the
    complement of B_{1/4} of (|8y|^eta - 1)^(p-1) |y|^(-n-sp) plus the same
    expression in the (t, q) pair.

    Radial quadrature with an analytic algebraic-tail remainder; relative
    accuracy ~1e-10 or better for admissible eta.
    """
    e = P.exponents
    thresh = e.eta_threshold()
    if not 0.0 < eta < thresh:
        raise DivergentSigma(
            f"eta={eta!r} outside (0, {thresh:.6g}); the defining integral diverges")
    om = OMEGA_N[e.n]
    total = 0.0
    for (r_exp, kexp) in ((e.p - 1.0, e.sp), (e.q - 1.0, e.tq)):
        def f(r):
            r = np.asarray(r, dtype=float)
            return ((8.0 * r) ** eta - 1.0) ** r_exp * r ** (-1.0 - kexp)

        body, _ = adaptive_quad(f, 0.25, 64.0, tol=tol,
                                initial_edges=np.geomspace(0.25, 64.0, 24))
        tail, _ = geometric_tail_quad(f, 64.0, kexp - eta * r_exp, tol=tol)
        total += body + tail
    return 2.0 ** (e.q - 1.0) * om * total


def sigma_bounds(eta: float, P: ProblemParams) -> tuple[float, float]:
    """Closed-form band [sigma_lo, sigma_hi] for sigma (no quadrature).

    The published upper bound carries an evident brace typo in its second
    numerator (4^{tq} - eta(q-1) for 4^{tq - eta(q-1)}); the corrected form,
    which is the one the two-phase derivation actually produces, is used
    here.  The band is a soft diagnostic either way.
    """
    e = P.exponents
    om = OMEGA_N[e.n]
    lo = om * 2.0 ** (e.q - 1.0 + 2.0 * e.sp) * (2.0 ** eta - 1.0) / e.sp
    dp = e.sp - eta * (e.p - 1.0)
    dq = e.tq - eta * (e.q - 1.0)
    if min(dp, dq) <= 0:
        return lo, math.inf
    hi = om * 2.0 ** (e.q + 3.0 * eta * (e.q - 1.0)) * max(
        4.0 ** dp / dp, 4.0 ** dq / dq)
    return lo, hi


# --------------------------------------------------------------------------
# theta, gamma, lambda.

def theta(kappa: float) -> float:
    """theta = kappa * (beta(1/2) - beta(3/4)) = 95 kappa / 256."""
    if not 0.0 < kappa <= 0.5:
        raise ValueError("kappa must lie in (0, 1/2]")
    return 95.0 * kappa / 256.0


def gamma_exponent(theta_val: float, eta: float) -> float:
    """Largest gamma in (0, 1) with (2 - theta)/2 <= 2^-gamma and gamma <= eta."""
    if not 0.0 < theta_val < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    g = min(eta, math.log2(2.0 / (2.0 - theta_val)))
    return min(max(g, 1e-300), 1.0 - 1e-12)


def lambda_rescale(u_sup: float, f_sup: float, sigma_val: float, p: float) -> float:
    """Normalisation lambda = 1 / (2 (||u|| + (||f||/sigma)^(1/(p-1))))."""
    if u_sup < 0 or f_sup < 0:
        raise ValueError("sup norms must be nonnegative")
    if u_sup == 0.0 and f_sup == 0.0:
        raise DegenerateScaling("cannot normalise identically-zero data")
    if sigma_val <= 0:
        raise ValueError("sigma must be positive")
    return 0.5 / (u_sup + (f_sup / sigma_val) ** (1.0 / (p - 1.0)))


# --------------------------------------------------------------------------
# Probe sets in B_{3/4}.

def _vdc(k: int, base: int = 2) -> float:
    v, denom = 0.0, 1.0
    while k:
        denom *= base
        k, rem = divmod(k, base)
        v += rem / denom
    return v


def probe_points(n: int, count: int = 32) -> np.ndarray:
    """Low-discrepancy probes in B_{3/4} plus the origin (first entry)."""
    if n == 1:
        pts = [0.0]
        k = 1
        while len(pts) < count + 1:
            pts.append((2.0 * _vdc(k, 2) - 1.0) * 0.74)
            k += 1
        return np.asarray(pts)
    pts = [np.zeros(2)]
    k = 1
    while len(pts) < count + 1:
        cand = np.array([2.0 * _vdc(k, 2) - 1.0, 2.0 * _vdc(k, 3) - 1.0]) * 0.74
        k += 1
        if np.linalg.norm(cand) < 0.74:
            pts.append(cand)
    return np.stack(pts)


# --------------------------------------------------------------------------
# Bundle terms at a single probe (beta is the closed-form barrier).

_BETA_POLY_CUT = 1e-6


def _beta1(x):
    return barrier_eval(np.asarray(x, dtype=float))


def _term_Ip_signed(x: float, P: ProblemParams, tol: float) -> float:
    """PV integral over {x+y in B1} of phi_p(beta(x)-beta(x+y)) K_sp."""
    e = P.exponents
    bx = float(_beta1(x))
    db = -4.0 * x * max(0.0, 1.0 - x * x)
    d2b = (12.0 * x * x - 4.0) if abs(x) < 1 else 0.0
    r0 = 1.0 - abs(x)

    def paired(yv):
        yv = np.asarray(yv, dtype=float)
        dplus = bx - _beta1(x + yv)
        dminus = bx - _beta1(x - yv)
        tiny = yv < _BETA_POLY_CUT
        if np.any(tiny):
            yt = yv[tiny]
            dplus = dplus.copy(); dminus = dminus.copy()
            dplus[tiny] = -(db * yt + 0.5 * d2b * yt * yt)
            dminus[tiny] = db * yt - 0.5 * d2b * yt * yt
        ksp = P.Ksp.eval(x, yv)
        return (_phi(dplus, e.p) + _phi(dminus, e.p)) * ksp

    worst = min(e.p, 2.0 * (e.p - 1.0)) - e.sp - 1.0
    val, _ = near_singular_quad(paired, min(r0, 0.25), worst, tol=tol)
    if r0 > 0.25:
        v2, _ = adaptive_quad(paired, 0.25, r0, tol=tol)
        val += v2
    # Leftover one-sided strip: |y| in (r0, other-side exit).
    lo, hi = r0, 1.0 + abs(x)
    if hi > lo + 1e-15:
        sgn = -1.0 if x >= 0 else 1.0  # the far side of the ball

        def single(yv):
            yv = np.asarray(yv, dtype=float)
            return _phi(bx - _beta1(x + sgn * yv), e.p) * P.Ksp.eval(x, yv)

        v3, _ = adaptive_quad(single, lo, hi, tol=tol, initial_edges=[lo, 0.5 * (lo + hi), hi])
        val += v3
    return val


def _term_I_abs(x: float, P: ProblemParams, r_exp: float, kernel, coeff,
                tol: float) -> float:
    """Integral over {x+y in B1} of w(x,y) |beta(x)-beta(x+y)|^(r-1) K."""
    bx = float(_beta1(x))

    frac = kernel_exp(kernel) - P.n  # sp or tq
    near_exp = (r_exp - 1.0) - frac - 1.0

    def one_side(sgn):
        hi = 1.0 - sgn * x

        def f(yv):
            yv = np.asarray(yv, dtype=float)
            w = coeff(x, sgn * yv) if coeff is not None else 1.0
            return w * np.abs(bx - _beta1(x + sgn * yv)) ** (r_exp - 1.0) \
                * kernel(x, yv)

        v, _ = near_singular_quad(f, min(hi, 0.25), near_exp, tol=tol)
        if hi > 0.25:
            v2, _ = adaptive_quad(f, 0.25, hi, tol=tol)
            v += v2
        return v

    return one_side(+1.0) + one_side(-1.0)


def kernel_exp(kernel) -> float:
    return kernel.exponent


def _phi(v, r):
    v = np.asarray(v, dtype=float)
    if r == 2.0:
        return v
    return np.sign(v) * np.abs(v) ** (r - 1.0)


def _term_II(x: float, P: ProblemParams, kappa: float, eta: float,
             r_exp: float, kernel, coeff, tol: float) -> float:
    """Integral over {x+y not in B1} of w |kappa beta(x) + 2(|2(x+y)|^eta - 1)|^(r-1) K.

    (beta vanishes outside the unit ball, so only beta(x) survives.)
    """
    bx = kappa * float(_beta1(x))
    decay = (kernel_exp(kernel) - P.n) - eta * (r_exp - 1.0)

    def side(sgn):
        lo = 1.0 - sgn * x

        def f(yv):
            yv = np.asarray(yv, dtype=float)
            z = np.abs(x + sgn * yv)
            w = coeff(x, sgn * yv) if coeff is not None else 1.0
            env = np.abs(bx + 2.0 * ((2.0 * z) ** eta - 1.0)) ** (r_exp - 1.0)
            return w * env * kernel(x, yv)

        body, _ = adaptive_quad(f, lo, lo + 63.0, tol=tol,
                                initial_edges=np.geomspace(lo, lo + 63.0, 16))
        tail, _ = geometric_tail_quad(f, lo + 63.0, decay, tol=tol)
        return body + tail

    return side(+1.0) + side(-1.0)


def _term_III(x: float, P: ProblemParams, eta: float, regime: int,
              tol: float) -> float:
    """The radial tail term over {|y| > 1/4}, with the regime's weights."""
    e = P.exponents
    cM = P.c_hat * P.a.bound
    if regime == 1:
        front = (2.0 + cM) * 2.0 ** (e.q - 1.0)
    elif regime == 2:
        front = 2.0 ** (e.q - 1.0) * (2.0 ** (e.q - 2.0) + cM)
    else:
        front = 2.0 ** (e.q - 1.0) * (1.0 + cM)

    def make(r_exp, kernel, wfun):
        def f(yv):
            yv = np.asarray(yv, dtype=float)
            w = wfun(x, yv) + wfun(x, -yv) if wfun is not None else 2.0
            return 0.5 * w * ((8.0 * yv) ** eta - 1.0) ** (r_exp - 1.0) \
                * (kernel(x, yv) + kernel(x, -yv))
        return f

    total = 0.0
    for (r_exp, kern, wsel) in (
            (e.p, P.Ksp, None),
            (e.q, P.Ktq, _q_tail_weight(P, regime))):
        f = make(r_exp, kern, wsel)
        decay = (kernel_exp(kern) - P.n) - eta * (r_exp - 1.0)
        body, _ = adaptive_quad(f, 0.25, 64.0, tol=tol,
                                initial_edges=np.geomspace(0.25, 64.0, 16))
        tail, _ = geometric_tail_quad(f, 64.0, decay, tol=tol)
        total += body + tail
    return front * total


def _q_tail_weight(P: ProblemParams, regime: int):
    # Regime 1 weighs the q-tail with the constant 1; regimes 2 and 3 keep
    # the modulating coefficient inside (regime 3 with the dilation factor).
    if regime == 1:
        return None
    if regime == 2:
        return lambda x, y: P.a.eval(x, y)
    return lambda x, y: P.c_hat * P.a.eval(x, y)


@dataclass
class _RegimeConstants:
    regime: int
    front_Ip: float
    front_Iq: float
    front_IIp: float
    front_IIq: float
    signed_Ip: bool


def _regime_constants(P: ProblemParams, regime: int) -> _RegimeConstants:
    q = P.exponents.q
    c_sing = 3.0 ** (q - 1.0) + 2.0 ** (q - 1.0)
    c_mix = 6.0 ** (q - 1.0) + 2.0 ** (2.0 * q - 3.0)
    if regime == 1:
        c = 2.0 ** (q - 2.0)
        return _RegimeConstants(1, c, c, c, c, signed_Ip=True)
    if regime == 2:
        return _RegimeConstants(2, c_mix, 2.0 ** (q - 2.0), c_mix,
                                2.0 ** (q - 2.0), signed_Ip=False)
    return _RegimeConstants(3, c_sing, c_sing, c_sing, c_sing, signed_Ip=False)


def applicable_regimes(P: ProblemParams) -> list[int]:
    """Case split of the estimate bundles.  Regimes 2 and 3 treat the
    p-phase by the one-sided Lagrange rate and need p > 1/(1-s) on top of
    the ordering (that is their stated hypothesis; it is also exactly the
    absolute integrability threshold of their barrier term)."""
    e = P.exponents
    p, q = e.p, e.q
    p_sing_ok = p > 1.0 / (1.0 - e.s)
    out = []
    if q >= p >= 2.0:
        out.append(1)
    if q >= 2.0 >= p and p_sing_ok:
        out.append(2)
    if 2.0 >= q >= p and p_sing_ok:
        out.append(3)
    return out


def _bundle_terms(x: float, P: ProblemParams, kappa: float, eta: float,
                  regime: int, tol: float, base_cache: dict) -> dict:
    """All five bundle terms at probe x for (kappa, eta) in one regime."""
    e = P.exponents
    rc = _regime_constants(P, regime)
    key = (float(x), regime)
    if key not in base_cache:
        if rc.signed_Ip:
            ip_base = _term_Ip_signed(x, P, tol)
        else:
            ip_base = _term_I_abs(x, P, e.p, P.Ksp, None, tol)
        iq_base = _term_I_abs(x, P, e.q, P.Ktq,
                              lambda xx, yy: P.c_hat * P.a.eval(xx, yy), tol)
        base_cache[key] = (ip_base, iq_base)
    ip_base, iq_base = base_cache[key]
    terms = {
        "I_p": rc.front_Ip * kappa ** (e.p - 1.0) * ip_base,
        "I_q": rc.front_Iq * kappa ** (e.q - 1.0) * iq_base,
        "II_p": rc.front_IIp * _term_II(x, P, kappa, eta, e.p, P.Ksp, None, tol),
        "II_q": rc.front_IIq * _term_II(
            x, P, kappa, eta, e.q, P.Ktq,
            lambda xx, yy: P.c_hat * P.a.eval(xx, yy), tol),
        "III": _term_III(x, P, eta, regime, tol),
    }
    terms["total"] = sum(terms.values())
    return terms


# --------------------------------------------------------------------------
# Selection.

@dataclass
class SelectionCertificate:
    epsilon: float
    target: float
    regimes: list[int]
    eta_per_regime: dict
    kappa_per_regime: dict
    eta: float
    kappa: float
    worst_terms: dict          # term name -> (value, probe x)
    worst_total: float
    com2_constant: float       # measured constant of the kappa-term bound
    kappa_cap: float           # (sigma / 2c)^(1/(p-1)) at the selected eta
    sigma_at_eta: float
    probes: int

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2, default=float)


def choose_eta_kappa(epsilon: float, P: ProblemParams, tol: float = 1e-9,
                     max_halvings: int = 60, probes: int = 32,
                     homogeneous: bool = False) -> tuple[float, float, SelectionCertificate]:
    """Select (eta, kappa) so every applicable bundle stays below
    eps / (Lambda 2^(n+sp+q)) at all probe x in B_{3/4}.

    eta is bisected first against the kappa-free part of the bundle (II at
    kappa=0 plus III), then kappa against the full bundle; the returned pair
    is the minimum over applicable regimes, re-verified.  The certificate
    records worst probe margins per term and the measured constant of the
    kappa-term estimate together with the induced cap on kappa.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if P.n != 1:
        raise NotImplementedError("constant selection is implemented for n = 1")
    bad = P.validation_report()
    if bad and not homogeneous:
        raise SelectionFailed("invalid exponents: " + "; ".join(bad))
    e = P.exponents
    lam = max(P.Ksp.lam, P.Ktq.lam)
    target = epsilon / (lam * 2.0 ** (P.n + e.sp + e.q))
    regimes = applicable_regimes(P)
    if not regimes:
        raise SelectionFailed("no regime matches these exponents")
    xs = probe_points(P.n, probes)
    base_cache: dict = {}
    eta_sel: dict = {}
    kappa_sel: dict = {}
    safety = 0.9

    for regime in regimes:
        eta_i = 0.49 * e.eta_threshold()
        ok = False
        for _ in range(max_halvings):
            worst = max(
                _bundle_terms(float(x), P, 0.0, eta_i, regime, tol, base_cache)["total"]
                for x in xs)
            if worst <= 0.5 * safety * target:
                ok = True
                break
            eta_i *= 0.5
        if not ok:
            raise SelectionFailed(
                f"eta bisection exhausted {max_halvings} halvings in regime {regime}")
        kappa_i = 0.5
        ok = False
        for _ in range(max_halvings):
            worst = max(
                _bundle_terms(float(x), P, kappa_i, eta_i, regime, tol, base_cache)["total"]
                for x in xs)
            if worst <= safety * target:
                ok = True
                break
            kappa_i *= 0.5
        if not ok:
            raise SelectionFailed(
                f"kappa bisection exhausted {max_halvings} halvings in regime {regime}")
        eta_sel[regime] = eta_i
        kappa_sel[regime] = kappa_i

    eta_fin = min(eta_sel.values())
    kappa_fin = min(kappa_sel.values())

    # Competition cap: kappa <= (sigma / 2c)^(1/(p-1)) with the measured
    # constant of the kappa-driven terms.
    sig = sigma(eta_fin, P)
    for _ in range(max_halvings):
        c_meas = _com2_constant(P, xs, kappa_fin, eta_fin, regimes[0], sig,
                                tol, base_cache)
        cap = (sig / (2.0 * c_meas)) ** (1.0 / (e.p - 1.0)) if c_meas > 0 else 0.5
        if kappa_fin <= cap:
            break
        kappa_fin *= 0.5
    else:
        raise SelectionFailed("kappa cap bisection exhausted")

    # Re-verify all applicable bundles at the final pair and collect margins.
    worst_terms: dict = {}
    worst_total = -math.inf
    for _ in range(max_halvings):
        worst_total = -math.inf
        worst_terms = {}
        for regime in regimes:
            for x in xs:
                terms = _bundle_terms(float(x), P, kappa_fin, eta_fin, regime,
                                      tol, base_cache)
                for name, val in terms.items():
                    if name == "total":
                        continue
                    if name not in worst_terms or val > worst_terms[name][0]:
                        worst_terms[name] = (val, float(x))
                worst_total = max(worst_total, terms["total"])
        if worst_total <= target:
            break
        kappa_fin *= 0.5
        eta_fin *= 0.5
        sig = sigma(eta_fin, P)
    else:
        raise SelectionFailed("final re-verification could not close")

    c_meas = _com2_constant(P, xs, kappa_fin, eta_fin, regimes[0], sig, tol,
                            base_cache)
    cap = (sig / (2.0 * c_meas)) ** (1.0 / (e.p - 1.0)) if c_meas > 0 else 0.5
    cert = SelectionCertificate(
        epsilon=epsilon, target=target, regimes=regimes,
        eta_per_regime=eta_sel, kappa_per_regime=kappa_sel,
        eta=eta_fin, kappa=kappa_fin, worst_terms=worst_terms,
        worst_total=worst_total, com2_constant=c_meas, kappa_cap=cap,
        sigma_at_eta=sig, probes=len(xs))
    return eta_fin, kappa_fin, cert


def _com2_constant(P, xs, kappa, eta, regime, sig, tol, base_cache) -> float:
    """Measured constant c with (kappa-terms) <= c (kappa^(p-1) +
    sigma^(-(q-p)/(p-1)) kappa^(q-1)), the competition-estimate shape."""
    e = P.exponents
    if kappa <= 0:
        return 0.0
    worst = 0.0
    for x in xs:
        terms = _bundle_terms(float(x), P, kappa, eta, regime, tol, base_cache)
        base0 = _bundle_terms(float(x), P, 0.0, eta, regime, tol, base_cache)
        knum = (terms["I_p"] + terms["I_q"]
                + max(terms["II_p"] - base0["II_p"], 0.0)
                + max(terms["II_q"] - base0["II_q"], 0.0))
        denom = kappa ** (e.p - 1.0) \
            + sig ** (-(e.q - e.p) / (e.p - 1.0)) * kappa ** (e.q - 1.0)
        worst = max(worst, knum / denom)
    return worst


# --------------------------------------------------------------------------
# Bundle assembly.

@dataclass
class ConstantsBundle:
    """The full constant chain (epsilon, eta, kappa, sigma, theta, gamma,
    lambda) with the relations tying them together."""

    epsilon: float
    eta: float
    kappa: float
    sigma: float
    sigma_lo: float
    sigma_hi: float
    theta: float
    gamma: float
    lam: float
    omega_n: float
    certificate: SelectionCertificate | None = None

    def __post_init__(self):
        if not 0.0 < self.kappa <= 0.5:
            raise ValueError("kappa must lie in (0, 1/2]")
        if abs(self.theta - 95.0 * self.kappa / 256.0) > 1e-15 * max(1.0, self.theta):
            raise ValueError("theta must equal 95 kappa / 256")
        if (2.0 - self.theta) / 2.0 > 2.0 ** (-self.gamma) + 1e-15:
            raise ValueError("gamma violates (2-theta)/2 <= 2^-gamma")
        if self.gamma > self.eta + 1e-15:
            raise ValueError("gamma must not exceed eta")
        if not (self.sigma_lo - 1e-12 <= self.sigma <= self.sigma_hi + 1e-12):
            warnings.warn(
                f"sigma={self.sigma:.6g} escapes the closed-form band "
                f"[{self.sigma_lo:.6g}, {self.sigma_hi:.6g}] under the "
                "documented omega_n convention (soft check)", RuntimeWarning)

    def to_json(self) -> str:
        d = {k: v for k, v in asdict(self).items() if k != "certificate"}
        if self.certificate is not None:
            d["certificate"] = json.loads(self.certificate.to_json())
        return json.dumps(d, indent=2, default=float)


def build_bundle(P: ProblemParams, u_sup: float, f_sup: float,
                 epsilon: float | None = None, tol: float = 1e-9,
                 probes: int = 32) -> ConstantsBundle:
    """Run the whole chain for one problem: selection, sigma, theta, gamma,
    lambda.  epsilon defaults to |B_1| / 2."""
    eps = epsilon if epsilon is not None else 0.5 * unit_ball_volume(P.n)
    eta, kappa, cert = choose_eta_kappa(eps, P, tol=tol, probes=probes)
    sig = sigma(eta, P)
    lo, hi = sigma_bounds(eta, P)
    th = theta(kappa)
    gam = gamma_exponent(th, eta)
    lam = lambda_rescale(u_sup, f_sup, sig, P.exponents.p)
    return ConstantsBundle(epsilon=eps, eta=eta, kappa=kappa, sigma=sig,
                           sigma_lo=lo, sigma_hi=hi, theta=th, gamma=gam,
                           lam=lam, omega_n=OMEGA_N[P.n], certificate=cert)
