from .prop1 import Prop1Report, capped_expectation, score_policies, verify_proposition1
from .tiny import (
    MAX_POLICIES,
    SUITE,
    AugState,
    OracleError,
    TinyMdp,
    builtin_mdp,
    builtin_suite,
    enumerate_policies,
    exact_return_distribution,
    load_tiny_mdp,
    parse_tiny_mdp,
    random_stochastic_policy,
    sample_returns,
)
