"""
Perturbed starts all land on the round sphere
=============================================

Newton's method on the axisymmetric shrinker equation, started from random
P2..P6 perturbations, converges back to the sphere of radius r*.
"""
import numpy as np

from shrinklab import symfun as sf
from shrinklab.solver import ShrinkerProblem, perturbed_body, solve_shrinker, sphere_radius

f, alpha = sf.quotient(2, 1), 2.0
r_star = sphere_radius(f, 3, alpha)
print(f"r* = {r_star!r}")

for seed in range(5):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(5)
    init, amp = perturbed_body(3, 128, r_star, 0.3, (2, 3, 4, 5, 6), w / np.abs(w).sum())
    body, rep = solve_shrinker(ShrinkerProblem(f, alpha), init)
    print(f"seed {seed}: amp {amp:.2f}, {rep.iterations} Newton steps, "
          f"sup|s - r*| = {np.max(np.abs(body.values - r_star)):.1e}")
