# The approximate blowup profile: the solved hierarchy, the expansion
# constants, the conserved-quantity fits, and the residual scaling in
# both parameters.

from dcnls.grid import build_grid
from dcnls.groundstate import solve_Q_mu
from dcnls.profile import (
    assemble_R,
    build_hierarchy,
    invariant_expansions,
    residual_psi,
)

grid = build_grid(1024, 40.0, "tanh")
gs = solve_Q_mu(0.02, grid)
ps = build_hierarchy(gs)

print("== hierarchy health ==")
print("  solvability inner products:",
      {k: f"{v:.1e}" for k, v in ps.solvability.items()})
worst = max(ps.residuals.values())
print(f"  worst field-equation residual: {worst:.1e}")
print(f"  e_mu = {ps.e_mu:.6f}   p_mu = {ps.p_mu:.6f}")

print("\n== assembled profiles ==")
for b, d in ((0.1, 0.0), (0.0, 0.1), (0.2, 0.1)):
    prof = assemble_R(ps, b, d)
    print(f"  (b,d)=({b},{d}): mass {prof.mass:.6f}  E {prof.energy:.5f}  "
          f"P {prof.momentum:+.5f}  sup|R|/Q {prof.ratio_sup:.3f}")

print("\n== residual scaling ==")
_, s_b1, _ = residual_psi(ps, 0.1, 0.0)
_, s_b2, _ = residual_psi(ps, 0.05, 0.0)
_, s_d1, _ = residual_psi(ps, 0.0, 0.1)
_, s_d2, _ = residual_psi(ps, 0.0, 0.05)
print(f"  halving b scales the weighted residual by {s_b1 / s_b2:.2f} (b^5 -> 32)")
print(f"  halving d scales it by {s_d1 / s_d2:.2f} (d^2 -> 4)")

print("\n== conserved-quantity fits over the parameter box ==")
fits = invariant_expansions(ps)
print(f"  energy coefficient / e_mu - 1:   {fits['energy_vs_e_mu']:+.2e}")
print(f"  momentum coefficient / p_mu - 1: {fits['momentum_vs_p_mu']:+.2e}")
print(f"  energy remainder exponent:  {fits['energy_remainder_exponent']:.2f}")
print(f"  mass-defect bound constant: {fits['mass_defect_K']:.4f}")
