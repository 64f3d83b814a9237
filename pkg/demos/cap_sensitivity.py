"""How the minimum cap changes what Return Capping learns on the discrete maze.

A loose floor (C^M = -90) lets the cap follow the batch VaR down to the cautious
detour, which returns -4 every time. A tight floor at the optimal VaR
(C^M = -4) keeps the cap from ever dropping below -4, so the guard route's good
outcomes still look as good as the detour and the learner has no reason to
avoid the guard.

    python demos/cap_sensitivity.py --seeds 1 2 --updates 100
"""

import argparse

import numpy as np

from retcap.algos import train
from retcap.harness import default_config


def run(min_cap, seed, updates):
    cfg = default_config("maze_discrete", "return_capping", min_cap=min_cap, updates=updates)
    rows = train("return_capping", "maze_discrete", cfg.algo, seed, eval_every=cfg.eval_every,
                 eval_episodes=cfg.eval_episodes)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1])
    ap.add_argument("--updates", type=int, default=100)
    args = ap.parse_args()

    for label, min_cap in (("loose floor", "conservative_cvar"), ("tight floor", "optimal_var")):
        finals = []
        for seed in args.seeds:
            rows = run(min_cap, seed, args.updates)
            evals = [(r["update_index"], r["eval_cvar_alpha"], r["cap_value"]) for r in rows
                     if r["eval_cvar_alpha"] is not None]
            print(f"{label} seed {seed}:")
            for i, cvar, cap in evals:
                print(f"  update {i:>3}  eval CVaR {cvar:8.2f}  cap {cap:7.2f}")
            finals.append(evals[-1][1])
        print(f"{label}: median final CVaR {np.median(finals):.2f}\n")


if __name__ == "__main__":
    main()
