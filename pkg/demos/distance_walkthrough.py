"""Fortet-Mourier distances between empirical measures on a hybrid space.

Compares the exact routes, the bounds around them, and shows how the
distance between two samples of one law shrinks with the sample size.
"""

import time

import numpy as np
from scipy.stats import wasserstein_distance

from pdmpkit import EmpiricalMeasure, HybridState, fm_distance_exact, make_rng, rho_c
from pdmpkit.metrics import (default_dictionary, fm_distance_blocked, fm_distance_dictionary,
                             fm_distance_subsampled, paired_bound)

rng = make_rng(3, 0)
c = 1.5

x, y = HybridState([0.0, 0.0], 0), HybridState([0.3, 0.4], 0)
d = fm_distance_exact(EmpiricalMeasure.from_states([x], c), EmpiricalMeasure.from_states([y], c))
print(f"two point masses: distance {d:.6f}, min(2, rho) = {min(2.0, rho_c(x, y, c)):.6f}")


def cloud(n, shift=0.0):
    return EmpiricalMeasure.uniform(rng.normal(size=(n, 2)) + shift, rng.integers(0, 2, n), c)


a, b = cloud(200), cloud(200, 0.3)
print("\nroutes on two clouds of 200 points")
for method in ("lp", "assignment"):
    t = time.time()
    print(f"  {method:10s} {fm_distance_exact(a, b, method=method):.5f}  ({time.time() - t:.2f}s)")
print(f"  dictionary {fm_distance_dictionary(a, b, default_dictionary(a, b, rng), rng):.5f}"
      "  (lower bound)")
print(f"  paired     {paired_bound(a, b):.5f}  (upper bound)")
print(f"  blocked    {fm_distance_blocked(a, b, rng, block=50):.5f}  (upper bound)")
mean, spread = fm_distance_subsampled(a, b, rng, size=100)
print(f"  subsampled {mean:.5f} +- {spread:.5f}  (50 points per side, biased upward)")

print("\ntwo samples of the same law in one dimension, mean over 5 repeats")
for n in (250, 1000, 4000):
    ds, ws = [], []
    for _ in range(5):
        s, t = rng.normal(size=(n, 1)), rng.normal(size=(n, 1))
        z = np.zeros(n, int)
        ds.append(fm_distance_exact(EmpiricalMeasure.uniform(s, z, c),
                                    EmpiricalMeasure.uniform(t, z, c), max_support=None))
        ws.append(wasserstein_distance(s[:, 0], t[:, 0]))
    d = np.mean(ds)
    print(f"  n = {n:5d}   distance {d:.4f}   plain W1 {np.mean(ws):.4f}   sqrt(n) * d = "
          f"{np.sqrt(n) * d:.3f}")
