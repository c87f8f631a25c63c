"""Kinetic bookkeeping: the eta family, the identities and the residual sign.

The weak-form kinetic residual vanishes (to scheme error) for smooth
transport and stays positive once a Burgers shock has formed, because the
entropy dissipation measure m is then a genuine positive measure.
"""
from stochkin.experiments import kinetic_residual_study
from stochkin.kinetic import build_eta, identity_suite

eta = build_eta(0.1)
print(f"eta(0) = {eta.eta_at_zero:.6f}, eta'(0) = {eta.eta_prime(0.0):.3f}")
for c in identity_suite(seed=0, n_cases=200):
    print(f"  {c.check_id:24s} {c.max_abs_error:.2e}  ({'ok' if c.passed else 'FAILED'})")

rep = kinetic_residual_study()
for row in rep.tables["defects"][1]:
    print("  %-24s %+.4f  tol %.4f  %s" % (row[0], row[2], row[3], row[4]))
for v in rep.verdicts:
    print(v.claim, v.status)
