"""
Numerical checks of the probability bounds
==========================================

Each check compares a Monte Carlo or exact quantity with the inequality
it should satisfy.  The same battery runs from the command line with
``plsagg check``.
"""

from plsagg.checks import run_checks
from plsagg.hardness import chi2_tail_bound

for res in run_checks():
    print(res.line())

# The bound decays in x more slowly when d is small.
for d in (1, 10, 100):
    print(d, [round(chi2_tail_bound(d, x), 5) for x in (0.5, 1.0, 2.0, 4.0)])
