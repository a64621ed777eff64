"""Green function, return probabilities and capacities of boxes.

Run:  python demos/green_and_capacity.py
"""
import numpy as np

from interlacements import FiniteSet, equilibrium, get_table, return_prob

# g(0) in d=3 is Watson's constant; the table memoizes every value it computes
g = get_table(3)
print("g(0), d=3      :", g.value((0, 0, 0)))
print("g(e1) = g(0)-1 :", g.value((1, 0, 0)))

# decay: g(x) ~ c |x|^(2-d), so doubling |x| divides g by about 2^(d-2)
for r in (5, 10, 20, 40):
    print(f"  g({r:>2},0,0) = {g.value((r, 0, 0)):.6f}   r*g = {r * g.value((r, 0, 0)):.4f}")

print("\nreturn probability q(d) and the 1/(2d) large-d regime")
for d in (3, 4, 5, 6, 8, 12, 18):
    print(f"  d={d:>2}  q={return_prob(d):.6f}  1/(2d)={1 / (2 * d):.6f}")

# capacity of the sup-norm ball grows like R^(d-2)
print("\ncapacity of B(0,R) in d=3")
prev = None
for R in (1, 2, 4, 8):
    eq = equilibrium(FiniteSet.ball(3, R), g)
    ratio = "" if prev is None else f"  ratio to previous {eq.capacity / prev:.3f}"
    print(f"  R={R}  |B|={len(eq.K):>5}  cap={eq.capacity:9.4f}{ratio}")
    prev = eq.capacity

# the equilibrium measure lives on the interior boundary and is largest at corners
eq = equilibrium(FiniteSet.ball(3, 3), g)
w = eq.weights.reshape(7, 7, 7)
print("\nequilibrium weights on the face x=3 of B(0,3):")
print(np.array2string(w[6], precision=4, suppress_small=True))
