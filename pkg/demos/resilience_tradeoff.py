"""What does resilience cost, and how much do fibers save?

Generates an 8-node city block, then sweeps the number of disjoint paths K
and the number of extra fiber pairs.  Each run is checked by the verifier.
Transceiver counts go up with K and down as fibers take over hops.

    python3 demos/resilience_tradeoff.py
"""

from fsobackhaul.cli import run_sweep, summarize_sweep
from fsobackhaul.core import CostWeights
from fsobackhaul.instance import generate_random_instance

inst = generate_random_instance(
    5, 3, area_side=1800, seed=6000, K=3, weights=CostWeights(4, 2, 1, 0.01), fiber_pair_fraction=0.0
)
rows = run_sweep(inst, k_list=[1, 2, 3], fiber_list=[0, 2, 4], seeds=1, method="exact")
assert all(r["verified"] for r in rows)

print(" K  fibers   F   M   N   objective")
for r in rows:
    print(f"{r['K']:2d}  {r['fibers']:6d}  {r['F']:2d}  {r['M']:2d}  {r['N']:2d}   {r['objective']:9.4f}")

print("\nmean transceivers per cell")
for cell in summarize_sweep(rows):
    print(f"  K={cell['K']} fibers={cell['fibers']}: {cell['mean_F']:.1f}")
