"""One stage on the flat unit square with a zero defect.

The stage rescales, mollifies and adds n_* = 3 primitive metrics.  What is
left is the step error, which shrinks like delta^2, while the C^1
increment grows like delta.

Run: python demos/one_stage.py   (about 10 s)
"""
import numpy as np

from c1alpha import Grid, ImmersionState, build_frame, default_table, run_stage

grid = Grid.from_bounds((0, 0), (1, 1), (33, 33))
frame = build_frame(np.eye(2))
table = default_table(2.0)
print(f"{'delta':>6} {'defect':>10} {'defect/d^2':>11} {'C1/delta':>9} {'grid':>6}")
for delta in (0.1, 0.05):
    _, rep = run_stage(ImmersionState.flat(grid), np.eye(2), 2.0, delta, 1.0, frame, table)
    print(f"{delta:6.3f} {rep.defect_sup:10.4g} {rep.defect_sup / delta**2:11.2f} "
          f"{rep.c1_increment / delta:9.2f} {max(rep.grid_counts):6d}")
