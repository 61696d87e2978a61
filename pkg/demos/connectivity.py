"""How likely is a random missing pattern to stay estimatable?

Two columns share a rated subject with probability ``P_edge``; the data set
is estimatable when the resulting column graph is connected.
"""
from ratingimpute.synthetic import (connectivity_probability, connectivity_probability_exact,
                                    edge_probability)

print("P_edge for m = 50 subjects")
for r in (0.6, 0.7, 0.8, 0.9, 0.95):
    print(f"  r = {r:<5} {edge_probability(r, 50):.4f}")

print("\nP_connect, exact vs 10,000 simulated graphs")
for p in (0.1, 0.3, 0.5):
    for n in (4, 8, 20):
        est, se = connectivity_probability(p, n, trials=10_000, rng=1)
        exact = connectivity_probability_exact(p, n)
        print(f"  p = {p}, n = {n:<3} exact {exact:.4f}  simulated {est:.4f} +- {se:.4f}")

print("\nthe plain one-draw-per-pair graph is much sparser:")
print(f"  p = 0.5, n = 4: {connectivity_probability_exact(0.5, 4, 'undirected'):.4f} vs "
      f"{connectivity_probability_exact(0.5, 4):.4f}")
