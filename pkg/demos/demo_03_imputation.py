# Imputing a risk function from an observed decision: the observed portfolio
# becomes optimal under the imputed function, which deviates minimally (in sup
# norm) from the reference measure.

import numpy as np
from fractions import Fraction

from riskimpute import dualpwl as dp
from riskimpute import inverse as iv
from riskimpute import riskmeasures as rm
from riskimpute.forward import ForwardProblem, loss_of, solve_forward, solve_forward_entropic
from riskimpute.probspace import DiscreteDistribution, dirac

returns = np.array([[0.0325, 0.1370], [-0.0755, -0.1712]])
problem = ForwardProblem.portfolio(returns)
spec = rm.mix_to_spectral(0.2, Fraction(9, 10))

# The client's "true" preference is entropic with low risk aversion, so the
# observed decision is the all-asset-2 portfolio, not the spectral optimum.
x_observed = solve_forward_entropic(problem, 0.01).x
print("observed decision:", x_observed)

inst = iv.InverseInstance(
    observations=((problem, x_observed),),
    reference=spec,
    family=iv.Family.LAW_INV_CVX_MEASURE,
)
result = iv.solve_reduced(inst)
print(f"deviation from the reference: u* = {result.deviation:.6f}")
print("vertex values:", np.round(result.deltas, 6))
print("reference values:", np.round(result.reference_values, 6))

# The imputed function renders the observation optimal...
f = result.function
sol = solve_forward(problem, f)
v_obs = dp.risk_value(f, loss_of(problem, x_observed))
print(f"\nforward optimum under the imputed function: {sol.value:.6f} at {sol.x}")
print(f"imputed value at the observed portfolio:    {v_obs:.6f}")

# ...while preserving the reference's behavior elsewhere (never above it,
# since both share the dual support set).
for x in ([1.0, 0.0], [0.5, 0.5], [0.0, 1.0]):
    d = dp.risk_value(f, loss_of(problem, x))
    r = rm.evaluate(spec, DiscreteDistribution.from_atoms(loss_of(problem, x).values, [Fraction(1, 2), Fraction(1, 2)]))
    print(f"x = {x}: imputed {d: .6f}   reference {r: .6f}")

# Pairwise preference statements join the same program.  An inconsistent set
# of statements is reported with the minimal violation that would repair it.
L = dirac(0.25)
U = DiscreteDistribution.from_atoms([-0.25, 0.25], [Fraction(1, 2), Fraction(1, 2)])
bad = iv.InverseInstance(
    ((problem, np.array([1.0, 0.0])),), spec, (iv.PreferencePair(L, U),),
    family=iv.Family.LAW_INV_CVX_MEASURE,
)
try:
    iv.solve_reduced(bad)
except Exception as exc:
    print("\ninconsistent preferences:", type(exc).__name__)
    print(iv.diagnose_infeasibility(bad))

# Imputed functions serialize losslessly for reuse.
dp.save(f, "/tmp/imputed_function.json")
g = dp.load("/tmp/imputed_function.json")
print("\nserialized and reloaded; values agree:",
      dp.risk_value(g, loss_of(problem, [0.3, 0.7])) == dp.risk_value(f, loss_of(problem, [0.3, 0.7])))
