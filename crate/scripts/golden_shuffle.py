"""Golden Monte-Carlo value of D_{e^eps}(P_S || Q_S) for the shuffle pair.

P_S = (1/T) sum_t N(2 e_t, s^2 I), Q_S = (1/T) sum_t N(e_t, s^2 I).
Independent of the Rust oracle: NumPy PCG64 stream, vectorized densities.
"""
import sys

import numpy as np
from scipy.special import logsumexp

SIGMA, T, EPS = 0.5, 3, 0.5
SEED = 20240611
N = 100_000_000
CHUNK = 2_000_000


def log_ratio(w):
    s2 = 2 * SIGMA * SIGMA
    lp = logsumexp((4 * w - 4) / s2, axis=1)
    lq = logsumexp((2 * w - 1) / s2, axis=1)
    return lp - lq


def main():
    rng = np.random.Generator(np.random.PCG64(SEED))
    total = total_sq = 0.0
    done = 0
    while done < N:
        m = min(CHUNK, N - done)
        w = SIGMA * rng.standard_normal((m, T))
        w[np.arange(m), rng.integers(0, T, m)] += 2.0
        v = np.maximum(0.0, -np.expm1(EPS - log_ratio(w)))
        total += v.sum()
        total_sq += (v * v).sum()
        done += m
    mean = total / N
    se = np.sqrt((total_sq / N - mean * mean) / (N - 1))
    print(f"sigma={SIGMA} T={T} eps={EPS} seed={SEED} n={N}: {mean:.8f} +- {se:.2e}")


if __name__ == "__main__":
    sys.exit(main())
