"""Gauss-map degree and the curvature measure on a spherical cap.

Run: python demos/rigidity_cap.py
"""
import numpy as np
from scipy.integrate import dblquad

from c1alpha.probes import cap_indicator, cap_patch
from c1alpha.rigidity import brouwer_degree, cell_centers, change_of_variables_check, \
    extrinsic_curvature_sum

h = 0.2
patch = cap_patch(1.0, h, 256)
print("degree at the north pole:", brouwer_degree(patch, None, [0.0, 0.0, 1.0]))
print("degree at the south pole:", brouwer_degree(patch, None, [0.0, 0.0, -1.0]))
lhs, rhs, res = change_of_variables_check(patch, None, cap_indicator(1.0, h))
print(f"int kappa dA = {lhs:.6f}, int deg dA = {rhs:.6f}, cap area 2 pi h = {2 * np.pi * h:.6f}")
left = cell_centers(patch.grid)[..., 0] < 0
# the square chart reaches past the cap; its image is the sphere over the whole square
w = patch.grid.spacing[0] * (patch.grid.counts[0] - 1) / 2
area, _ = dblquad(lambda y, x: 1 / np.sqrt(1 - x * x - y * y), -w, w, -w, w)
print(f"sum of |N(E_i)| over two halves = {extrinsic_curvature_sum(patch, [left, ~left]):.6f}"
      f"  (sphere area over the chart {area:.6f})")
