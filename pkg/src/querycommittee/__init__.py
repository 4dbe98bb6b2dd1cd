"""Approval-based committee selection from queried (incomplete) votes.

The package is organised by concern:

``profiles``
    voter populations (finite profiles, product-Bernoulli and adversarial
    mixtures) and instance generators.
``scoring``
    PAV score, marginal/swap deltas, the Delta* certificate and
    full-information rules (AV, exhaustive PAV, LS-PAV).
``fairness``
    brute-force JR / alpha-EJR / alpha-OAS audits with witnesses.
``queries``
    exact and noisy query models, cover planning, per-ballot estimators
    and the query log.
``adaptive``
    alpha-PAV, noisy-alpha-PAV and ucb-alpha-PAV.
``nonadaptive``
    the greedy non-adaptive JR rule and full-information PAV.
``lowerbound``
    exact-rational search for adversarial subset distributions.
``harness``
    vote-matrix ingestion, imputation and the experiment pipeline.
"""

from querycommittee.profiles import (
    FiniteProfile,
    MixturePopulation,
    ProductPopulation,
    AdversaryPopulation,
    SubsetDistribution,
    build_finite_profile,
    gen_fig1a_distribution,
    gen_adversary_population,
    gen_product_population,
    filter_popular,
)
from querycommittee.scoring import (
    pav_score,
    delta_add,
    delta_swap,
    delta_star,
    alpha_hat,
    certifies,
    av_committee,
    exhaustive_pav,
    ls_pav,
)
from querycommittee.fairness import check_jr, check_ejr, check_oas, avs, avs_lower_bound

__all__ = [
    "FiniteProfile",
    "MixturePopulation",
    "ProductPopulation",
    "AdversaryPopulation",
    "SubsetDistribution",
    "build_finite_profile",
    "gen_fig1a_distribution",
    "gen_adversary_population",
    "gen_product_population",
    "filter_popular",
    "pav_score",
    "delta_add",
    "delta_swap",
    "delta_star",
    "alpha_hat",
    "certifies",
    "av_committee",
    "exhaustive_pav",
    "ls_pav",
    "check_jr",
    "check_ejr",
    "check_oas",
    "avs",
    "avs_lower_bound",
]

__version__ = "0.1.0"
