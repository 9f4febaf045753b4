"""Tabulate the corrugation profile and check its defining identities.

Run: python demos/corrugation_profile.py
"""
import numpy as np

from c1alpha.corrugation import TWO_PI, default_table, eval_gamma, invert_j0

table = default_table(1.0)
rng = np.random.default_rng(0)
s = rng.uniform(0, 1, 10_000)
t = rng.uniform(0, TWO_PI, 10_000)

g, _, dt = eval_gamma(table, s, t)
pitch = np.abs((dt[:, 0] + 1) ** 2 + dt[:, 1] ** 2 - (1 + s**2))
g2, _, _ = eval_gamma(table, s, t + TWO_PI)

print("amplitude f(s) for s in 0, 0.25, 0.5, 0.75, 1:")
print("  ", np.round(invert_j0(np.linspace(0, 1, 5)), 6))
print(f"pitch identity residual   {pitch.max():.3g}")
print(f"2 pi periodicity residual {np.abs(g2 - g).max():.3g}")
h = 1e-6
print(f"f'(0) by differences      {invert_j0(np.array([h]))[0] / h:.6f}  (sqrt 2 = {np.sqrt(2):.6f})")
