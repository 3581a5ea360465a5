"""The Riemannian distance on SPD matrices and the inequalities it satisfies."""

import numpy as np

from netkf.riemann import contraction_check, norm_gap_bound_check, property_checks, riemannian_distance

rng = np.random.default_rng(0)
G, H = rng.standard_normal((2, 3, 3))
P, Q = G @ G.T + np.eye(3), H @ H.T + np.eye(3)

print(f"delta(P, Q)         = {riemannian_distance(P, Q):.6f}")
print(f"delta(P^-1, Q^-1)   = {riemannian_distance(np.linalg.inv(P), np.linalg.inv(Q)):.6f}")

# a Riccati-like map W + B X B^T pulls any two inputs closer together
W, B = 0.5 * np.eye(3), rng.standard_normal((3, 3))
lhs, rhs = contraction_check(P, Q, W, B)
print(f"contraction: {lhs:.6f} <= {rhs:.6f}")

lhs, rhs = norm_gap_bound_check(P + Q, Q)
print(f"||P+Q - Q|| = {lhs:.4f} <= (e^delta - 1) ||Q|| = {rhs:.4f}")

print("\nrandomized checks:")
for name, trials, violations, worst in property_checks(seed=1):
    print(f"  {name:28s} {violations}/{trials} violations, worst excess {worst:.2e}")
