#!/usr/bin/env python3
"""Monte Carlo sweep of the voting threshold.

Simulates per-user votes directly from the error profile (bit = 1 with
probability p_f when the channel is free, 1 - p_m when busy) and prints
Q_f + Q_m for every threshold, marking the analytic optimum.

Usage: python scripts/lambda_sweep.py [--n 10] [--pf 0.1] [--pm 0.2]
       [--trials 10000] [--seed 7]
"""

import argparse

import numpy as np

from lp3pss.fusion import DetectionProfile, compute_alpha, compute_lambda


def sweep(n: int, p_f: float, p_m: float, trials: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    busy_votes = (rng.random((trials, n)) < 1.0 - p_m).sum(axis=1)
    free_votes = (rng.random((trials, n)) < p_f).sum(axis=1)
    profile = DetectionProfile(p_f, p_m)
    lam_opt = compute_lambda(n, compute_alpha(profile))
    print(f"n={n} p_f={p_f} p_m={p_m} trials={trials}  ->  analytic optimum lambda={lam_opt}")
    print(f"{'lambda':>6}  {'Q_f':>8}  {'Q_m':>8}  {'Q_f+Q_m':>8}")
    best = min(
        range(1, n + 1),
        key=lambda lam: (free_votes >= lam).mean() + (busy_votes < lam).mean(),
    )
    for lam in range(1, n + 1):
        q_f = (free_votes >= lam).mean()
        q_m = (busy_votes < lam).mean()
        marks = ("  <- empirical argmin" if lam == best else "") + (
            "  (analytic)" if lam == lam_opt else ""
        )
        print(f"{lam:>6}  {q_f:>8.4f}  {q_m:>8.4f}  {q_f + q_m:>8.4f}{marks}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=10)
    parser.add_argument("--pf", type=float, default=0.1)
    parser.add_argument("--pm", type=float, default=0.2)
    parser.add_argument("--trials", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    sweep(args.n, args.pf, args.pm, args.trials, args.seed)
