#!/usr/bin/env python3
"""Reference values for the normal quantile-sum probability.

For X ~ N(0, I_m) and c = sqrt(2) * q(alpha / 2), the event A_i is
{X_i - X_j <= c for all j != i}, so

    P(A_i) = integral phi(x) * (1 - Phi(x - c))^(m - 1) dx

and the sum over i is m times that. The script evaluates the integral by
adaptive quadrature and cross-checks it with a brute-force Monte-Carlo
estimate, then writes both to the fixture read by the acceptance tests.

Usage: quantile_sum_oracle.py OUT [--draws N] [--seed S]
"""

import argparse

import numpy as np
from scipy import integrate, stats


def quadrature(m, alpha):
    c = np.sqrt(2.0) * stats.norm.ppf(alpha / 2.0)
    f = lambda x: stats.norm.pdf(x) * stats.norm.sf(x - c) ** (m - 1)
    val, _ = integrate.quad(f, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12)
    return m * val


def monte_carlo(m, alpha, draws, seed, chunk=1_000_000):
    rng = np.random.default_rng(seed)
    c = np.sqrt(2.0) * stats.norm.ppf(alpha / 2.0)
    hits = 0
    done = 0
    while done < draws:
        size = min(chunk, draws - done)
        x = rng.standard_normal((size, m))
        for i in range(m):
            others = np.delete(x, i, axis=1)
            hits += int(np.all(x[:, [i]] - others <= c, axis=1).sum())
        done += size
    est = hits / draws
    # Events A_i are disjoint for c < 0, so the per-draw count is 0 or 1.
    se = np.sqrt(est * (1.0 - est) / draws)
    return est, se


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--draws", type=int, default=10_000_000)
    ap.add_argument("--seed", type=int, default=20240607)
    args = ap.parse_args()
    lines = [
        "# Quantile-sum probability for Sigma = I.",
        f"# mc columns: numpy default_rng seed {args.seed}, {args.draws} draws per row",
        "# m alpha quadrature mc mc_se",
    ]
    for m in (2, 3, 4):
        for alpha in (0.01, 0.05, 0.1, 0.5):
            q = quadrature(m, alpha)
            est, se = monte_carlo(m, alpha, args.draws, args.seed + 100 * m + int(alpha * 1000))
            lines.append(f"{m} {alpha} {q:.10f} {est:.7f} {se:.7f}")
            print(lines[-1], flush=True)
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
