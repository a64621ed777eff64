"""Scale bookkeeping for the renormalization and the dimension condition.

Run:  python demos/renormalization_and_bounds.py
"""
from interlacements import (build_levels, build_scales, chi, peierls_condition, u1_threshold,
                            verify_induction_vacant)

# L_{n+1} = l_n L_n with l_n = 100 floor(L_n^a): exact integers throughout
seq = build_scales(3, 1000, 4)
print("d=3, L0=1000")
for n, (L, ell) in enumerate(zip(seq.L, seq.ell)):
    print(f"  n={n}  L_n={L:<16} l_n={ell}")

track = build_levels(seq, 1.0, 3, 0.5)
print(f"\nlevels u_n with u0=1, r=3, c1=0.5: {[round(u, 6) for u in track.u]}")
print(f"limit u_inf = {track.u_inf:.6f} (untabulated tail below {track.tail_bound:.1e})")

# the induction needs r >= 4d / ((d-2) a); with r=3 the report says so
rep = verify_induction_vacant(seq, [1e-12] * 5, 1.0, 1.0)
print(f"\ninduction report: condition on r {rep.condition_r}, all steps hold: {rep.all_hold}")

print("\nPeierls-type condition 7 chi(0) < 1 with m=2")
for d in range(14, 22):
    value, holds = peierls_condition(d)
    print(f"  d={d}  {value:.5f}  {'holds' if holds else 'fails'}")

d, m, lam = 18, 2, 0.5
print(f"\nd={d}, m={m}, lambda={lam}: chi={chi(d, m, lam):.4f}, u1={u1_threshold(d, m, lam):.5f}")
