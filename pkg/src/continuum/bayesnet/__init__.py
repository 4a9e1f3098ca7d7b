"""Discrete Bayesian networks: the agents' knowledge model."""

from .blanket import MarkovBlanket, d_separated, markov_blanket
from .inference import (
    Factor,
    ImpossibleEvidence,
    Joint,
    enumerate_joint,
    infer,
    log_evidence,
    log_prob,
    marginalize_joint,
    surprise,
)
from .learning import bic_score, learn_structure, reset_counts, update_parameters
from .network import BayesNet, Cpt, is_acyclic
from .variables import Variable, discretize, equal_width_cuts

__all__ = [
    "BayesNet",
    "Cpt",
    "Factor",
    "ImpossibleEvidence",
    "Joint",
    "MarkovBlanket",
    "Variable",
    "bic_score",
    "d_separated",
    "discretize",
    "enumerate_joint",
    "equal_width_cuts",
    "infer",
    "is_acyclic",
    "learn_structure",
    "log_evidence",
    "log_prob",
    "markov_blanket",
    "marginalize_joint",
    "reset_counts",
    "surprise",
    "update_parameters",
]
