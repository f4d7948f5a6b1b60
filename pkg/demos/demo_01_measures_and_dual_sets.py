# Tour of the risk-measure layer: distributions with exact rational weights,
# measure evaluation, and the structured dual sets behind each measure.

import numpy as np
from fractions import Fraction

from riskimpute import riskmeasures as rm
from riskimpute.probspace import DiscreteDistribution, OutcomeSpace, RandomLoss, distribution_of, uniform_lift

# Distributions carry Fractions, never floats, so probability-count arithmetic
# is exact.  Duplicate support values merge at construction.
d = DiscreteDistribution.from_atoms([0.02, -0.01, 0.02], [Fraction(1, 4), Fraction(1, 2), Fraction(1, 4)])
print("support:", d.support, "masses:", [str(p) for p in d.probs])

# A distribution with rational weights can always be re-expressed over equally
# likely outcomes; the round trip is exact.
z = uniform_lift(d, cap=5040)
print("uniform lift over", z.space.size, "outcomes:", z.values)
print("round trip recovers the distribution:", distribution_of(z) == d)

# The client's reference in the portfolio study: a two-step spectrum equal to
# 0.2 * expectation + 0.8 * CVaR at the 90% level.
spec = rm.mix_to_spectral(0.2, Fraction(9, 10))
print("\nspectrum levels:", spec.levels, "breakpoints:", [str(b) for b in spec.breakpoints])

losses = DiscreteDistribution.from_atoms([-0.0325, 0.0755], [Fraction(1, 2), Fraction(1, 2)])
print("spectral value (LP over the transportation polytope):", rm.evaluate(spec, losses))
print("closed-form quantile integral cross-check:           ", rm.spectral_closed_value(spec, losses))
combo = 0.2 * losses.mean() + 0.8 * rm.cvar_tail_value(Fraction(9, 10), losses)
print("0.2 E + 0.8 CVaR_90 directly:                         ", combo)

# Every supported measure exposes the convex set of dual vectors of its
# supremum representation; the set depends only on the probability masses.
for m in (rm.MaxLoss(), rm.Expectation(), rm.CVaR(Fraction(9, 10)), spec):
    c = rm.reduced_subgradient_set(m, losses)
    print(f"{type(m).__name__:18s} -> {type(c).__name__}")

# The entropic measure has a closed-form value and no polyhedral dual set;
# it plays the ground truth in the studies.
ent = rm.Entropic(1.0)
print("\nentropic value:", rm.evaluate(ent, losses))
print("small s approaches the mean:", rm.evaluate(rm.Entropic(1e-6), losses), "vs", losses.mean())
