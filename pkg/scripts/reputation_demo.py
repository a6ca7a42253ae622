#!/usr/bin/env python3
"""Reputation convergence demo: one always-flipping adversary among
honest users. Prints the credibility trajectory and the final weights,
showing the adversary's influence decaying over the sensing periods.

Usage: python scripts/reputation_demo.py [--n 10] [--rounds 100] [--seed 11]
"""

import argparse

from lp3pss.scenario import ALWAYS_FLIP, AdversaryProfile, Behavior
from lp3pss.sim import SensingConfig, SimulationConfig, run_simulation


def demo(n: int, rounds: int, seed: int) -> None:
    adversary_id = 1
    config = SimulationConfig(
        SensingConfig(n=n, rounds=rounds, seed=seed),
        adversary=AdversaryProfile({adversary_id: Behavior(ALWAYS_FLIP)}),
    )
    result = run_simulation(config)
    print(f"n={n}, rounds={rounds}, U{adversary_id} always flips its report\n")
    print(f"{'t':>4}  {'phi(adversary)':>14}  {'min phi(honest)':>15}")
    step = max(1, rounds // 10)
    for record in result.rounds[::step]:
        honest = [p for uid, p in record.phi.items() if uid != adversary_id]
        print(f"{record.t:>4}  {record.phi[adversary_id]:>14.3f}  {min(honest):>15.3f}")
    print("\nfinal records:")
    for uid, rec in sorted(result.fc.records.items()):
        role = "adversary" if uid == adversary_id else "honest"
        print(f"  U{uid:<3} rho={rec.rho:<4} eta={rec.eta:<4} phi={rec.phi:.3f} "
              f"weight={rec.weight:.3f}  ({role})")
    rates = result.report_dict()["error_rates"]
    print(f"\nfused error rates: {rates}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=10)
    parser.add_argument("--rounds", type=int, default=100)
    parser.add_argument("--seed", type=int, default=11)
    args = parser.parse_args()
    demo(args.n, args.rounds, args.seed)
