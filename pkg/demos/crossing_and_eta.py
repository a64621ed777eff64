"""Crossing probabilities and the finite-volume percolation proxy.

Small windows keep this under a couple of minutes; the acceptance suite runs
the same code at radius 20.

Run:  python demos/crossing_and_eta.py
"""
import numpy as np

from interlacements import bracket_u_star, estimate_crossing, eta_samples

us = [0.5, 1.0, 2.0, 3.0, 4.0, 6.0]
print("vacant crossing of B(0,L) -> boundary of B(0,3L), d=3, L=5, 12 trials")
for e in estimate_crossing("vacant", 0, us, 12, 1, d=3, L0=5):
    print(f"  u={e.u:<4} {e.successes:>2}/{e.trials}  95% [{e.lo95:.2f}, {e.hi95:.2f}]")

print("\noccupied *-crossing in a plane, same geometry")
for e in estimate_crossing("occupied", 0, us, 12, 2, d=3, L0=5):
    print(f"  u={e.u:<4} {e.successes:>2}/{e.trials}  95% [{e.lo95:.2f}, {e.hi95:.2f}]")

# the origin's vacant cluster reaching distance M; one sample serves all u and M
samples = eta_samples([4, 8], 6.0, 30, 3)
grid = np.linspace(0.1, 6.0, 12)
print("\neta proxy (origin connected to the boundary of B(0,M) in V^u)")
for M in samples.radii:
    row = " ".join(f"{samples.estimate(u, M).estimate:.2f}" for u in grid)
    print(f"  M={M}: {row}")

b = bracket_u_star(0.1, 6.0, 8, 30, 0.5, 3, samples=samples)
print(f"\nlevel where the M=8 proxy crosses 1/2: [{b.lo:.3f}, {b.hi:.3f}] ({b.note})")
