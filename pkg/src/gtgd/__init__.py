"""Query evaluation and analysis under tuple-generating dependencies.

Core value types live in `gtgd.model`; the chase in `gtgd.chase`; rule
classification in `gtgd.classify`; guarded-to-linear compilation and
rewriting in `gtgd.linearize`; treewidth machinery in `gtgd.tw`;
approximations in `gtgd.approx`; containment and equivalence deciders in
`gtgd.decide`; hardness reduction constructions in `gtgd.reduction`.
The most used names are re-exported here.
"""

from .approx import CqsApprox, OmqApprox, approx_threshold, compact_approx, cqs_k_approx, ucq_k_approx
from .chase import ChaseBudget, ChaseResult, chase, chase_full, ground_chase
from .classify import Classification, SetClassification, classify, classify_set
from .decide import (
    Budget,
    Counterexample,
    Verdict,
    cq_k_equiv_baseline,
    cqs_contains,
    cqs_equiv_k,
    omq_contains,
    omq_equiv_k,
    sigma_minimal_cq,
)
from .errors import (
    BudgetError,
    GtgdError,
    KBelowThresholdError,
    ModelError,
    NotGuardedError,
    ParseError,
)
from .homs import core, eval_query, find_homomorphisms, holds
from .linearize import LinearizationResult, fpt_eval_omq, linearize, ucq_rewrite
from .model import (
    CQ,
    CQS,
    OMQ,
    UCQ,
    Atom,
    Const,
    Instance,
    Schema,
    TGD,
    Var,
    canonical_database,
    validate,
)
from .reduction import (
    GroheDb,
    clique_reduction_cqs,
    clique_reduction_constraint_free,
    finite_witness_search,
    grohe_db,
    satisfying_db_from_omq,
)
from .textio import dump, load, parse, serialize
from .tw import (
    Graph,
    MinorMap,
    TreeDecomposition,
    decide_tw,
    eval_bounded_tw,
    exact_treewidth,
    gaifman,
    grid_minor,
)

__version__ = "0.1.0"
