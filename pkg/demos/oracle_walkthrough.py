"""Walk through the exact oracle on the guarded corridor.

Every deterministic policy is enumerated and scored three ways: mean return,
CVaR at the MDP's alpha, and the capped expectation E[min(R, C)]. With C set to
the VaR of the CVaR-optimal policy the capped maximizers are CVaR-optimal; with
C pushed far above it the capped objective turns back into the plain mean.

    python demos/oracle_walkthrough.py
"""

from retcap.oracle import builtin_mdp, capped_expectation, exact_return_distribution, score_policies, verify_proposition1
from retcap.oracle.prop1 import format_policy


def main():
    mdp = builtin_mdp("guarded_corridor")
    scores = score_policies(mdp, mdp.alpha)
    report = verify_proposition1(mdp)
    cap = report.cap
    print(f"{mdp.name}: {len(scores)} deterministic policies, alpha={mdp.alpha:g}, cap C={cap:g}\n")
    print(f"{'#':>3} {'mean':>7} {'VaR':>7} {'CVaR':>7} {'E[min(R,C)]':>12}  policy")
    for s in scores:
        capped = capped_expectation(exact_return_distribution(mdp, s.policy), cap)
        print(f"{s.index:>3} {s.mean:7.3f} {s.var:7.3f} {s.cvar:7.3f} {capped:12.3f}  {format_policy(s.policy)}")

    print()
    for offset in (0.0, 2.0, 100.0):
        r = verify_proposition1(mdp, cap_offset=offset)
        print("\n".join(r.lines()))
        print()


if __name__ == "__main__":
    main()
