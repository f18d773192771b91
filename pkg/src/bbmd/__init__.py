"""Desk-scale testbed for black-box incentive-compatible transformations."""

from .core import (
    Allocation,
    Params,
    PriorDistribution,
    Setting,
    TypeProfile,
    derive_params,
    params_from_config,
    sample_profile,
    welfare,
)
from .adversarial import AstRule, PairDistribution, ValidPair, alloc_ast, is_feasible, sample_valid_pair
from .oracle import OracleSession
from .transformations import FeasibilityMode, TransformationContext, make_transformation, run
from .icverify import check_bic_matching, check_midr, max_weight_matching
from .analysis import ast_expected_welfare_exact, attack_experiment, expected_welfare_exact, expected_welfare_mc
from . import fixtures

__version__ = "0.1.0"
