"""Singular-value soft-thresholding: the workhorse proximal operator.

Walks through what thresholding does to a noisy low-rank matrix: the
spectrum, the prox characterization, and the rank path as the threshold
grows.
"""

import numpy as np

from nnfactor import nuclear_norm, soft_threshold_singular, svd

rng = np.random.default_rng(0)

# A rank-2 signal buried in noise.
n, t, k = 30, 40, 2
signal = rng.standard_normal((n, k)) @ rng.standard_normal((k, t)) * 2.0
noisy = signal + 0.8 * rng.standard_normal((n, t))

print("top singular values of the noisy matrix:")
print(np.round(svd(noisy).singular_values[:6], 2))

# Thresholding clips the spectrum; everything below x disappears.
x = 12.0
cleaned = soft_threshold_singular(noisy, x)
print(f"\nafter soft-thresholding at {x}:")
print(np.round(svd(cleaned).singular_values[:6], 2))
print("rank:", np.linalg.matrix_rank(cleaned))
print("relative error to the true signal:",
      round(np.linalg.norm(cleaned - signal) / np.linalg.norm(signal), 3))

# The output is the unique minimizer of 0.5||G - A||_F^2 + x ||G||_*.
obj = lambda G: 0.5 * np.sum((G - noisy) ** 2) + x * nuclear_norm(G)
probes = max(obj(cleaned + 0.1 * rng.standard_normal(cleaned.shape))
             for _ in range(100))
print("\nprox objective at output vs best random probe:",
      round(obj(cleaned), 2), "<", round(probes, 2))

# Rank is monotone in the threshold.
print("\nrank path as the threshold grows:")
for xx in (2, 5, 10, 20, 40):
    r = np.linalg.matrix_rank(soft_threshold_singular(noisy, xx))
    print(f"  x = {xx:>4}: rank {r}")
