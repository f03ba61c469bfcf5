"""Fuzzing the algebraic inequalities behind the quadrature bounds.

Three scalar difference/convexity bounds power every near-field estimate
in the toolkit; the C^2 envelope bounds and the near-field integrability
checks sit on top of them.  Each campaign mixes uniform, log-uniform, and
near-degenerate draws (sign and power bugs live near |b| ~ 0) and reports
the worst slack with its witness.
"""

from nldp import (barrier_eval, check_local_integrability,
                  constant_coefficient, fuzz_C2_bounds, fuzz_revL1,
                  fuzz_singular, fuzz_superlinear, holder_coefficient,
                  model_params)

for fn in (fuzz_revL1, fuzz_superlinear, fuzz_singular):
    rep = fn(1_000_000)
    print(f"{rep.lemma}: {rep.violations} violations / {rep.samples:,} draws")
    print(f"  worst slack {rep.worst_slack:.3e} at {rep.witness}")
    if rep.extras:
        print(f"  extras: {rep.extras}")
print()

print("C^2 envelope bounds with the barrier (10^4 draws each):")
for name, rep in fuzz_C2_bounds(10_000).items():
    print(f"  {name}: {rep.violations} violations, "
          f"worst slack {rep.worst_slack:.3e}")
print()

P = model_params(n=1, s=0.6, t=0.5, p=2.0, q=2.2)
print("near-field integrability of the glued barrier (all finite):")
print(f"  p-phase, second order: "
      f"{check_local_integrability(barrier_eval, P, 'p-second'):.6f}")
print(f"  q-phase, bounded coefficient: "
      f"{check_local_integrability(barrier_eval, P, 'q-bounded', coeff=constant_coefficient(1, 1.0)):.6f}")
print(f"  q-phase, Holder coefficient: "
      f"{check_local_integrability(barrier_eval, P, 'q-holder', coeff=holder_coefficient(1, 1.0, 0.5), alpha=0.5):.6f}")
